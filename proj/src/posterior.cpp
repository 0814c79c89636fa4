#include "bayescomplex/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "bayescomplex/errors.hpp"
#include "bayescomplex/stats.hpp"

namespace bayescomplex {

Dataset generate_dataset(const std::function<double(double)>& g, std::size_t N, double sigma_e_sq,
                         const L2Measure& measure, const SeededRng& rng) {
    if (N < 1) throw PreconditionError("generate_dataset: N must be >= 1");
    if (!(sigma_e_sq >= 0.0)) throw PreconditionError("generate_dataset: sigma_e_sq must be >= 0");
    Dataset S;
    S.sigma_e_sq = sigma_e_sq;
    S.measure = measure;
    S.seed = rng.seed();
    S.stream_id = rng.stream_id();
    SeededRng r = rng;
    const double se = std::sqrt(sigma_e_sq);
    S.xs.reserve(N);
    S.ys.reserve(N);
    for (std::size_t n = 0; n < N; ++n) {
        const double x = r.uniform(measure.lo(), measure.hi());
        const double eta = se * r.normal();
        S.xs.push_back(x);
        S.ys.push_back(g(x) + eta);
    }
    return S;
}

Dataset generate_dataset(const PwlFunction& g, std::size_t N, double sigma_e_sq, const L2Measure& measure,
                         const SeededRng& rng) {
    if (g.domain_lo > measure.lo() || g.domain_hi < measure.hi())
        throw DomainError("generate_dataset: generator does not cover the measure's domain");
    return generate_dataset([&g](double x) { return eval(g, x); }, N, sigma_e_sq, measure, rng);
}

std::function<double(double)> linear_target_function(const LinearTarget& g) {
    if (g.perp_sq != 0.0) throw PreconditionError("linear_target_function: perp_sq must be 0");
    const LinearModelParams w{g.coeffs};
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, static_cast<int>(g.coeffs.size())};
    return [w, basis](double x) { return eval_linear(w, basis, x); };
}

double clipped_loss(double pred, double y, const LossSpec& spec) {
    const double r = pred - y;
    return std::min(r * r, spec.clip_C);
}

namespace {

Eigen::MatrixXd design_matrix(const Dataset& S, const BasisSpec& basis) {
    Eigen::MatrixXd phi(static_cast<Eigen::Index>(S.size()), basis.d);
    for (std::size_t n = 0; n < S.size(); ++n) {
        const auto b = legendre_basis(basis.d, S.xs[n]);
        for (int i = 0; i < basis.d; ++i) phi(static_cast<Eigen::Index>(n), i) = b[static_cast<std::size_t>(i)];
    }
    return phi;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

GaussianPosterior linear_prior_as_gaussian(const LinearPriorSpec& prior, int d) {
    prior.validate();
    return {Eigen::VectorXd::Zero(d), prior.sigma_w_sq * Eigen::MatrixXd::Identity(d, d)};
}

GaussianPosterior conjugate_posterior_linear(const Dataset& S, const LinearPriorSpec& prior, const BasisSpec& basis,
                                             double sigma_y_sq) {
    prior.validate();
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("conjugate_posterior_linear: sigma_y_sq must be > 0");
    if (S.size() == 0) return linear_prior_as_gaussian(prior, basis.d);
    const Eigen::MatrixXd phi = design_matrix(S, basis);
    if (!phi.allFinite()) throw NumericalError("conjugate_posterior_linear: design matrix is not finite");
    const Eigen::MatrixXd precision = phi.transpose() * phi / sigma_y_sq +
                                      Eigen::MatrixXd::Identity(basis.d, basis.d) / prior.sigma_w_sq;
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericalError("conjugate_posterior_linear: precision is not PD");
    GaussianPosterior q;
    q.covariance = llt.solve(Eigen::MatrixXd::Identity(basis.d, basis.d));
    q.covariance = 0.5 * (q.covariance + q.covariance.transpose());
    q.mean = llt.solve(phi.transpose() * to_vec(S.ys) / sigma_y_sq);
    return q;
}

LinearModelParams sample_gaussian(const GaussianPosterior& q, SeededRng& rng) {
    Eigen::LLT<Eigen::MatrixXd> llt(q.covariance);
    if (llt.info() != Eigen::Success) throw NumericalError("sample_gaussian: covariance is not PD");
    Eigen::VectorXd z(q.mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    const Eigen::VectorXd w = q.mean + llt.matrixL() * z;
    return {std::vector<double>(w.data(), w.data() + w.size())};
}

namespace {

bool keep_draw(std::size_t step, const SgldConfig& cfg) {
    return step > cfg.burn_in && (step - cfg.burn_in) % std::max<std::size_t>(cfg.thin, 1) == 0;
}

void check_sgld_config(const SgldConfig& cfg) {
    if (!(cfg.eta > 0.0)) throw PreconditionError("SgldConfig: eta must be > 0");
    if (!(cfg.sigma_y_sq > 0.0)) throw PreconditionError("SgldConfig: sigma_y_sq must be > 0");
    if (cfg.noise_scale < 0.0) throw PreconditionError("SgldConfig: noise_scale must be >= 0");
}

[[noreturn]] void diverged(std::size_t step, double norm) {
    std::ostringstream msg;
    msg << "run_sgld: diverged at step " << step << " with parameter norm " << norm;
    throw NumericalError(msg.str());
}

}  // namespace

std::vector<LinearModelParams> run_sgld(const Dataset& S, const BasisSpec& basis, const LinearPriorSpec& prior,
                                        const SgldConfig& cfg, const SeededRng& rng) {
    prior.validate();
    check_sgld_config(cfg);
    const std::size_t N = S.size();
    const double n_eff = static_cast<double>(std::max<std::size_t>(N, 1));
    const bool data = cfg.use_likelihood && N > 0;
    const Eigen::MatrixXd phi = data ? design_matrix(S, basis) : Eigen::MatrixXd();
    const Eigen::VectorXd y = data ? to_vec(S.ys) : Eigen::VectorXd();
    const double noise_sd = cfg.noise_scale * std::sqrt(2.0 * cfg.eta / n_eff);

    SeededRng r = rng;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(basis.d);
    std::vector<LinearModelParams> draws;
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        Eigen::VectorXd grad = w / (prior.sigma_w_sq * n_eff);
        if (data) grad -= phi.transpose() * (y - phi * w) / (cfg.sigma_y_sq * n_eff);
        w -= cfg.eta * grad;
        if (noise_sd > 0.0)
            for (Eigen::Index i = 0; i < w.size(); ++i) w(i) += noise_sd * r.normal();
        const double norm = w.norm();
        if (!(norm <= 1e6)) diverged(step, norm);
        if (keep_draw(step, cfg)) draws.push_back({std::vector<double>(w.data(), w.data() + w.size())});
    }
    return draws;
}

std::vector<ShallowNetParams> run_sgld(const Dataset& S, std::size_t k, const NnPriorSpec& prior,
                                       const SgldConfig& cfg, const SeededRng& rng, const ShallowNetParams* start) {
    prior.validate();
    check_sgld_config(cfg);
    const std::size_t N = S.size();
    const double n_eff = static_cast<double>(std::max<std::size_t>(N, 1));
    const bool data = cfg.use_likelihood && N > 0;
    const double noise_sd = cfg.noise_scale * std::sqrt(2.0 * cfg.eta / n_eff);

    SeededRng r = rng;
    ShallowNetParams th;
    if (start) {
        if (start->k() != k) throw PreconditionError("run_sgld: start has the wrong width");
        th = *start;
    } else {
        SeededRng init = rng.substream(1);
        th = sample_nn_prior(prior, k, init);
    }
    std::vector<ShallowNetParams> draws;
    std::vector<double> g1(k), g2(k), gb(k);
    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        double gb2 = th.b2 / (prior.sigma_b_sq * n_eff);
        for (std::size_t i = 0; i < k; ++i) {
            g1[i] = th.w1[i] / (prior.sigma_w_sq * n_eff);
            g2[i] = th.w2[i] / (prior.sigma_w_sq * n_eff);
            gb[i] = 0.0;
        }
        if (data) {
            const double scale = 1.0 / (cfg.sigma_y_sq * n_eff);
            for (std::size_t n = 0; n < N; ++n) {
                const double x = S.xs[n];
                const double resid = S.ys[n] - forward(th, x);
                gb2 -= resid * scale;
                for (std::size_t i = 0; i < k; ++i) {
                    if (x <= th.b1[i]) continue;
                    const double act = x - th.b1[i];
                    g1[i] -= resid * scale * th.w2[i] * act;
                    g2[i] -= resid * scale * th.w1[i] * act;
                    gb[i] += resid * scale * th.w1[i] * th.w2[i];
                }
            }
        }
        double norm_sq = 0.0;
        auto step_one = [&](double& p, double g) {
            p -= cfg.eta * g;
            if (noise_sd > 0.0) p += noise_sd * r.normal();
            norm_sq += p * p;
        };
        for (std::size_t i = 0; i < k; ++i) {
            step_one(th.w1[i], g1[i]);
            step_one(th.w2[i], g2[i]);
            step_one(th.b1[i], gb[i]);
            // Reflect into the support of the uniform bias prior.
            for (int guard = 0; guard < 64 && (th.b1[i] < 0.0 || th.b1[i] > prior.M); ++guard)
                th.b1[i] = th.b1[i] < 0.0 ? -th.b1[i] : 2.0 * prior.M - th.b1[i];
        }
        step_one(th.b2, gb2);
        const double norm = std::sqrt(norm_sq);
        if (!(norm <= 1e6)) diverged(step, norm);
        if (keep_draw(step, cfg)) draws.push_back(th);
    }
    return draws;
}

namespace {

template <class Pred>
LossEstimate per_draw_mean(std::size_t n_draws, Pred per_draw) {
    if (n_draws == 0) throw PreconditionError("loss of Q: no posterior draws");
    RunningMoments m;
    for (std::size_t i = 0; i < n_draws; ++i) m.add(per_draw(i));
    return {m.mean, m.std_err()};
}

}  // namespace

LossEstimate empirical_loss_of_Q(const std::vector<LinearModelParams>& draws, const Dataset& S,
                                 const BasisSpec& basis, const LossSpec& spec) {
    if (S.size() == 0) throw PreconditionError("empirical_loss_of_Q: empty dataset");
    const Eigen::MatrixXd phi = design_matrix(S, basis);
    return per_draw_mean(draws.size(), [&](std::size_t i) {
        const Eigen::VectorXd pred = phi * to_vec(draws[i].w);
        double s = 0.0;
        for (std::size_t n = 0; n < S.size(); ++n)
            s += clipped_loss(pred(static_cast<Eigen::Index>(n)), S.ys[n], spec);
        return s / static_cast<double>(S.size());
    });
}

LossEstimate empirical_loss_of_Q(const std::vector<ShallowNetParams>& draws, const Dataset& S,
                                 const LossSpec& spec) {
    if (S.size() == 0) throw PreconditionError("empirical_loss_of_Q: empty dataset");
    return per_draw_mean(draws.size(), [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t n = 0; n < S.size(); ++n) s += clipped_loss(forward(draws[i], S.xs[n]), S.ys[n], spec);
        return s / static_cast<double>(S.size());
    });
}

LossEstimate true_loss_of_Q(const std::vector<LinearModelParams>& draws, const std::function<double(double)>& g,
                            double sigma_e_sq, const L2Measure& measure, const BasisSpec& basis,
                            const LossSpec& spec, std::size_t n_x, const SeededRng& rng) {
    if (n_x < 1) throw PreconditionError("true_loss_of_Q: n_x must be >= 1");
    SeededRng r = rng;
    const double se = std::sqrt(sigma_e_sq);
    return per_draw_mean(draws.size(), [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t n = 0; n < n_x; ++n) {
            const double x = r.uniform(measure.lo(), measure.hi());
            const double y = g(x) + se * r.normal();
            s += clipped_loss(eval_linear(draws[i], basis, x), y, spec);
        }
        return s / static_cast<double>(n_x);
    });
}

LossEstimate true_loss_of_Q(const std::vector<ShallowNetParams>& draws, const PwlFunction& g, double sigma_e_sq,
                            const LossSpec& spec, std::size_t n_x, const SeededRng& rng) {
    if (n_x < 1) throw PreconditionError("true_loss_of_Q: n_x must be >= 1");
    SeededRng r = rng;
    const double se = std::sqrt(sigma_e_sq);
    return per_draw_mean(draws.size(), [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t n = 0; n < n_x; ++n) {
            const double x = r.uniform(g.domain_lo, g.domain_hi);
            const double y = eval(g, x) + se * r.normal();
            s += clipped_loss(forward(draws[i], x), y, spec);
        }
        return s / static_cast<double>(n_x);
    });
}

double pac_bayes_rhs(double L_S_Q, double kl, std::size_t N, double C) {
    if (kl < 0.0) throw PreconditionError("pac_bayes_rhs: kl must be >= 0");
    if (N < 1) throw PreconditionError("pac_bayes_rhs: N must be >= 1");
    return L_S_Q + C * std::sqrt(kl / (2.0 * static_cast<double>(N)));
}

double kl_gaussians(const GaussianPosterior& q, const GaussianPosterior& p) {
    if (q.mean.size() != p.mean.size()) throw PreconditionError("kl_gaussians: dimension mismatch");
    Eigen::LLT<Eigen::MatrixXd> lp(p.covariance);
    Eigen::LLT<Eigen::MatrixXd> lq(q.covariance);
    if (lp.info() != Eigen::Success || lq.info() != Eigen::Success)
        throw NumericalError("kl_gaussians: covariance is not PD");
    const auto d = static_cast<double>(q.mean.size());
    const double trace = lp.solve(q.covariance).trace();
    const Eigen::VectorXd diff = p.mean - q.mean;
    const double maha = diff.dot(lp.solve(diff));
    const double logdet_p = 2.0 * lp.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double logdet_q = 2.0 * lq.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return 0.5 * (trace + maha - d + logdet_p - logdet_q);
}

double divergence_upper_bound(const ComplexityEstimate& chiE, std::size_t N, double sigma_y_sq, double L_S_Q) {
    if (!std::isfinite(chiE.chi)) throw PreconditionError("divergence_upper_bound: chi must be finite");
    if (!(sigma_y_sq > 0.0)) throw PreconditionError("divergence_upper_bound: sigma_y_sq must be > 0");
    return std::max(0.0, chiE.chi - static_cast<double>(N) * L_S_Q / (2.0 * sigma_y_sq));
}

double theorem_bound(double sigma_e_sq, double beta, double chi_sharp, std::size_t N, double C) {
    if (!(beta > 0.0 && beta <= 1.0)) throw PreconditionError("theorem_bound: beta must lie in (0, 1]");
    if (!std::isfinite(chi_sharp) || chi_sharp < 0.0) throw PreconditionError("theorem_bound: chi must be finite");
    if (N < 1) throw PreconditionError("theorem_bound: N must be >= 1");
    return sigma_e_sq + beta * sigma_e_sq + C / std::sqrt(2.0) * std::sqrt(chi_sharp / static_cast<double>(N));
}

SigmaSearchResult find_sigma_alg(double beta, double sigma_e_sq, const std::function<double(double)>& expected_loss,
                                 const SigmaSearchOptions& opts) {
    if (!(beta > 0.0 && beta <= 1.0)) throw PreconditionError("find_sigma_alg: beta must lie in (0, 1]");
    if (!(opts.lo > 0.0 && opts.hi > opts.lo)) throw PreconditionError("find_sigma_alg: bad bracket");
    SigmaSearchResult res;
    res.target_loss = (1.0 + beta) * sigma_e_sq;
    res.loss_at_lo = expected_loss(opts.lo);
    res.loss_at_hi = expected_loss(opts.hi);
    if (!(res.loss_at_lo <= res.target_loss && res.target_loss <= res.loss_at_hi)) {
        std::ostringstream msg;
        msg << "find_sigma_alg: bracket fails, loss(" << opts.lo << ") = " << res.loss_at_lo << ", loss(" << opts.hi
            << ") = " << res.loss_at_hi << ", target " << res.target_loss;
        throw AssumptionViolation(msg.str());
    }
    double a = std::log(opts.lo);
    double b = std::log(opts.hi);
    double best_gap = std::numeric_limits<double>::infinity();
    for (res.iterations = 1; res.iterations <= opts.max_iter; ++res.iterations) {
        const double mid = 0.5 * (a + b);
        const double loss = expected_loss(std::exp(mid));
        const double gap = std::abs(loss - res.target_loss);
        if (gap < best_gap) {
            best_gap = gap;
            res.sigma_alg_sq = std::exp(mid);
            res.achieved_loss = loss;
        }
        if (gap <= 1e-3 * opts.tol) break;
        if (loss < res.target_loss) a = mid;
        else b = mid;
    }
    res.iterations = std::min(res.iterations, opts.max_iter);
    res.converged = best_gap <= opts.tol;
    return res;
}

std::function<double(double)> conjugate_expected_empirical_loss(const ConjugateSetup& setup, std::size_t replicas,
                                                                std::size_t draws, const SeededRng& rng) {
    if (replicas < 1 || draws < 1) throw PreconditionError("conjugate_expected_empirical_loss: empty design");
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, setup.d};
    const auto g = linear_target_function(setup.target);
    struct Replica {
        Dataset S;
        Eigen::MatrixXd z;  // d x draws standard normals
    };
    std::vector<Replica> reps;
    for (std::size_t r = 0; r < replicas; ++r) {
        Replica rep;
        rep.S = generate_dataset(g, setup.N, setup.sigma_e_sq, L2Measure{L2Measure::Kind::UniformSym},
                                 rng.substream(2 * r));
        SeededRng zr = rng.substream(2 * r + 1);
        rep.z.resize(setup.d, static_cast<Eigen::Index>(draws));
        for (Eigen::Index j = 0; j < rep.z.cols(); ++j)
            for (Eigen::Index i = 0; i < rep.z.rows(); ++i) rep.z(i, j) = zr.normal();
        reps.push_back(std::move(rep));
    }
    return [setup, basis, reps](double sigma_y_sq) {
        double total = 0.0;
        for (const auto& rep : reps) {
            const GaussianPosterior q = conjugate_posterior_linear(rep.S, setup.prior, basis, sigma_y_sq);
            Eigen::LLT<Eigen::MatrixXd> llt(q.covariance);
            const Eigen::MatrixXd W = (llt.matrixL() * rep.z).colwise() + q.mean;
            const Eigen::MatrixXd phi = design_matrix(rep.S, basis);
            const Eigen::MatrixXd pred = phi * W;
            double s = 0.0;
            for (Eigen::Index j = 0; j < pred.cols(); ++j)
                for (Eigen::Index n = 0; n < pred.rows(); ++n)
                    s += clipped_loss(pred(n, j), rep.S.ys[static_cast<std::size_t>(n)], setup.loss);
            total += s / static_cast<double>(pred.size());
        }
        return total / static_cast<double>(reps.size());
    };
}

PacBayesTrial run_conjugate_trial(const ConjugateSetup& setup, double sigma_y_sq, std::size_t draws,
                                  std::size_t n_x, const SeededRng& rng) {
    const BasisSpec basis{BasisSpec::Kind::LegendreOrthonormal, setup.d};
    const auto g = linear_target_function(setup.target);
    const L2Measure mu{L2Measure::Kind::UniformSym};
    const Dataset S = generate_dataset(g, setup.N, setup.sigma_e_sq, mu, rng.substream(0));
    const GaussianPosterior q = conjugate_posterior_linear(S, setup.prior, basis, sigma_y_sq);
    SeededRng dr = rng.substream(1);
    std::vector<LinearModelParams> ws;
    ws.reserve(draws);
    for (std::size_t i = 0; i < draws; ++i) ws.push_back(sample_gaussian(q, dr));
    PacBayesTrial t;
    const LossEstimate ls = empirical_loss_of_Q(ws, S, basis, setup.loss);
    const LossEstimate ld = true_loss_of_Q(ws, g, setup.sigma_e_sq, mu, basis, setup.loss, n_x, rng.substream(2));
    t.L_S = ls.value;
    t.L_S_se = ls.std_err;
    t.L_D = ld.value;
    t.L_D_se = ld.std_err;
    t.kl = kl_gaussians(q, linear_prior_as_gaussian(setup.prior, setup.d));
    t.rhs = pac_bayes_rhs(t.L_S, t.kl, setup.N, setup.loss.clip_C);
    return t;
}

}  // namespace bayescomplex
