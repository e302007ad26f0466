#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "alglm/interaction.hpp"
#include "alglm/learners.hpp"
#include "alglm/link.hpp"
#include "alglm/simulation.hpp"
#include "json.hpp"

namespace alglm {

// Everything a command-line invocation asks for, independent of argv syntax.
struct CliConfig {
    std::string subcommand;  // estimate-main, estimate-interaction, simulate, oracle

    // estimate-*
    std::string input;
    std::string y;
    std::string a1;
    std::optional<std::string> a2;
    std::vector<std::string> l;
    LinkKind link = LinkKind::identity;
    double clip_eps = 1e-6;
    LearnerSpec learner;
    int K = 10;
    std::uint64_t seed = 1;
    bool assume_indep = false;
    AceOptions ace;
    bool include_influence = false;

    // simulate
    std::string config;
    std::optional<int> reps;
    std::string replicates_output;
    unsigned threads = 0;

    // oracle
    std::string family;
    std::string estimator;
    std::size_t n_large = 50000;
    int oracle_reps = 100;
    std::uint64_t sigma_seed = kDefaultSigmaSeed;
    bool literal_exposure_link = false;
    bool illustration_code_variant = false;
    std::string estimand = "main";

    // Output file; empty means standard output only.
    std::string output;
};

nlohmann::json to_json(const CliConfig& config);
CliConfig cli_config_from_json(const nlohmann::json& j);

// Parses argv into a CliConfig. Throws ConfigError with a one-line message on
// bad or missing flags. Returns nullopt after printing help to `out`.
std::optional<CliConfig> parse_cli(int argc, const char* const* argv, std::ostream& out);

// Executes a parsed config, writing results to `out` and diagnostics to `err`.
// Returns 0 on success, 2 on configuration or input errors, 3 on estimation
// failures.
int execute_cli(const CliConfig& config, std::ostream& out, std::ostream& err);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace alglm
