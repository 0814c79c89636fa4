#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bayescomplex/models.hpp"
#include "bayescomplex/rng.hpp"

namespace bayescomplex::cli {

/// Bad config text or values; maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat key = value settings. Each value remembers where it came from
/// ("file:line" or "argument") for error messages.
class Config {
public:
    struct Entry {
        std::string value;
        std::string origin;
    };

    /// '#' starts a comment; blank lines are skipped; quotes around values and
    /// brackets around lists are stripped. Duplicate keys are an error.
    static Config parse(std::string_view text, const std::string& source);
    static Config load(const std::string& path);

    /// Overrides any existing value.
    void set(const std::string& key, const std::string& value, const std::string& origin);
    void erase(const std::string& key) { entries_.erase(key); }
    const Entry* find(const std::string& key) const;
    const std::map<std::string, Entry>& entries() const { return entries_; }

private:
    std::map<std::string, Entry> entries_;
};

/// Typed access with defaults. Every key read is recorded with its resolved
/// value in read order; finish() rejects keys that were never read.
class Params {
public:
    explicit Params(const Config& cfg) : cfg_(cfg) {}

    double real(const std::string& key, double def);
    long long integer(const std::string& key, long long def);
    std::uint64_t u64(const std::string& key, std::uint64_t def);
    std::string text(const std::string& key, const std::string& def);
    std::vector<double> reals(const std::string& key, const std::vector<double>& def);
    std::vector<long long> integers(const std::string& key, const std::vector<long long>& def);

    /// ConfigError naming the key and where its value came from.
    [[noreturn]] void fail(const std::string& key, const std::string& what) const;

    void finish() const;
    const std::vector<std::pair<std::string, std::string>>& resolved() const { return resolved_; }

private:
    const Config::Entry* lookup(const std::string& key);
    void record(const std::string& key, const std::string& value);

    const Config& cfg_;
    std::vector<std::string> used_;
    std::vector<std::pair<std::string, std::string>> resolved_;
};

/// Locale-independent shortest form that round-trips, at most 17 significant digits.
std::string fmt(double x);
std::string fmt(std::size_t x);
std::string fmt(long long x);
std::string fmt(int x);
std::string fmt(bool x);

struct CsvReport {
    std::string subcommand;
    std::vector<std::pair<std::string, std::string>> header;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    bool pass = true;

    /// Adds a row from (column, value) pairs; unnamed columns stay empty.
    void add(const std::vector<std::pair<std::string, std::string>>& cells);
    /// Cell of the first row whose row_type column equals `row_type`.
    std::string value(const std::string& row_type, const std::string& column) const;
    std::string render() const;
};

/// Names of the registered subcommands, in help order.
const std::vector<std::string>& subcommands();

/// Every subcommand reads `seed` (default 1) and `workers` (default 1) in
/// addition to its own keys.
///
/// Runs one subcommand. Library PreconditionError and DomainError come back
/// as ConfigError; numerical failures propagate unchanged.
CsvReport run_subcommand(const std::string& name, const Config& cfg);

CsvReport cmd_linear_complexity(const Config& cfg);
CsvReport cmd_nn_complexity(const Config& cfg);
CsvReport cmd_codim(const Config& cfg);
CsvReport cmd_one_change(const Config& cfg);
CsvReport cmd_periodic(const Config& cfg);
CsvReport cmd_pacbayes(const Config& cfg);
CsvReport cmd_sgld_check(const Config& cfg);
CsvReport cmd_projection_check(const Config& cfg);

/// Whole command line: bayescomplex <subcommand> [--config FILE] [--seed U64]
/// [--workers N] [--out PATH] [key=value ...]. Returns the process exit code:
/// 0 pass, 1 assertion failure, 2 config error, 3 numerical error.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

// ---- Shared experiment pieces ------------------------------------------------

/// c knots at j/(c+1), slope changes a, -a, a, ...
std::vector<Knot> alternating_knots(std::size_t c, double a);

/// Tent (apex 1 at 1/2) or trapezoid (plateau on [1/3, 2/3]) profile on [0,1].
PwlFunction periodic_profile(const std::string& name);

/// Bias-free network within `scale` of a representation of 0 on [0,1]: node
/// pairs at a shared bias with opposite effective weights, nodes parked past
/// 1 and zero-output nodes, then iid N(0, scale^2) noise. Biases are clamped
/// at 0; k is uniform on [2, k_max].
ShallowNetParams sample_near_zero(SeededRng& rng, std::size_t k_max, double scale);

}  // namespace bayescomplex::cli
