#include "alglm/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "alglm/crossfit.hpp"
#include "alglm/dataset.hpp"
#include "alglm/errors.hpp"
#include "alglm/folds.hpp"
#include "alglm/main_effect.hpp"
#include "alglm/report.hpp"

namespace alglm {

nlohmann::json to_json(const CliConfig& c) {
    nlohmann::json j{{"subcommand", c.subcommand},
                     {"input", c.input},
                     {"y", c.y},
                     {"a1", c.a1},
                     {"l", c.l},
                     {"link", to_string(c.link)},
                     {"clip_eps", c.clip_eps},
                     {"learner", to_json(c.learner)},
                     {"K", c.K},
                     {"seed", c.seed},
                     {"assume_indep", c.assume_indep},
                     {"ace", {{"tol", c.ace.tol}, {"max_iter", c.ace.max_iter}}},
                     {"include_influence", c.include_influence},
                     {"config", c.config},
                     {"replicates_output", c.replicates_output},
                     {"threads", c.threads},
                     {"family", c.family},
                     {"estimator", c.estimator},
                     {"n_large", c.n_large},
                     {"oracle_reps", c.oracle_reps},
                     {"sigma_seed", c.sigma_seed},
                     {"literal_exposure_link", c.literal_exposure_link},
                     {"illustration_code_variant", c.illustration_code_variant},
                     {"estimand", c.estimand},
                     {"output", c.output}};
    j["a2"] = c.a2 ? nlohmann::json(*c.a2) : nlohmann::json(nullptr);
    j["reps"] = c.reps ? nlohmann::json(*c.reps) : nlohmann::json(nullptr);
    return j;
}

CliConfig cli_config_from_json(const nlohmann::json& j) {
    CliConfig c;
    try {
        c.subcommand = j.at("subcommand").get<std::string>();
        c.input = j.value("input", c.input);
        c.y = j.value("y", c.y);
        c.a1 = j.value("a1", c.a1);
        if (j.contains("a2") && !j.at("a2").is_null()) c.a2 = j.at("a2").get<std::string>();
        c.l = j.value("l", c.l);
        c.link = parse_link_kind(j.value("link", std::string("identity")));
        c.clip_eps = j.value("clip_eps", c.clip_eps);
        if (j.contains("learner")) c.learner = learner_spec_from_json(j.at("learner"));
        c.K = j.value("K", c.K);
        c.seed = j.value("seed", c.seed);
        c.assume_indep = j.value("assume_indep", c.assume_indep);
        if (j.contains("ace")) {
            c.ace.tol = j.at("ace").value("tol", c.ace.tol);
            c.ace.max_iter = j.at("ace").value("max_iter", c.ace.max_iter);
        }
        c.include_influence = j.value("include_influence", c.include_influence);
        c.config = j.value("config", c.config);
        if (j.contains("reps") && !j.at("reps").is_null()) c.reps = j.at("reps").get<int>();
        c.replicates_output = j.value("replicates_output", c.replicates_output);
        c.threads = j.value("threads", c.threads);
        c.family = j.value("family", c.family);
        c.estimator = j.value("estimator", c.estimator);
        c.n_large = j.value("n_large", c.n_large);
        c.oracle_reps = j.value("oracle_reps", c.oracle_reps);
        c.sigma_seed = j.value("sigma_seed", c.sigma_seed);
        c.literal_exposure_link = j.value("literal_exposure_link", c.literal_exposure_link);
        c.illustration_code_variant = j.value("illustration_code_variant", c.illustration_code_variant);
        c.estimand = j.value("estimand", c.estimand);
        c.output = j.value("output", c.output);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed CLI config: ") + e.what());
    }
    return c;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// Learner flags shared by both estimation subcommands.
struct LearnerFlags {
    std::string kind = "forest";
    int n_trees = 500;
    int min_leaf = 5;
    int mtry = 0;
    double subsample = 0.632;
    std::optional<double> bandwidth;
    std::optional<double> lambda;
    int cv_folds = 5;
    std::string config;
};

void add_learner_flags(CLI::App* app, LearnerFlags& f) {
    app->add_option("--learner", f.kind, "Nuisance learner: forest, kernel, ridge_linear or ridge_logistic")
        ->capture_default_str();
    app->add_option("--n-trees", f.n_trees, "Forest size")->capture_default_str();
    app->add_option("--min-leaf", f.min_leaf, "Forest minimum leaf size")->capture_default_str();
    app->add_option("--mtry", f.mtry, "Features tried per split (0 = ceil(p/3))")->capture_default_str();
    app->add_option("--subsample", f.subsample, "Per-tree subsample fraction")->capture_default_str();
    app->add_option("--bandwidth", f.bandwidth, "Kernel bandwidth (default: cross-validated)");
    app->add_option("--lambda", f.lambda, "Ridge penalty (default: cross-validated)");
    app->add_option("--cv-folds", f.cv_folds, "Folds for internal tuning")->capture_default_str();
    app->add_option("--learner-config", f.config, "JSON learner spec; overrides the learner flags");
}

LearnerSpec learner_from_flags(const LearnerFlags& f, std::uint64_t seed) {
    LearnerSpec s;
    if (!f.config.empty()) {
        s = learner_spec_from_json(read_json_file(f.config));
    } else {
        s.kind = parse_learner_kind(f.kind);
        s.n_trees = f.n_trees;
        s.min_leaf = f.min_leaf;
        s.mtry = f.mtry;
        s.bootstrap_fraction = f.subsample;
        s.bandwidth = f.bandwidth;
        s.lambda = f.lambda;
        s.cv_folds = f.cv_folds;
    }
    s.seed = seed;
    s.validate();
    return s;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
    out << text;
    if (!path.empty()) {
        std::ofstream file(path);
        if (!file) throw IngestionError("cannot open '" + path + "' for writing");
        file << text;
    }
}

int run_estimate(const CliConfig& c, std::ostream& out) {
    CsvSchema schema{c.y, c.a1, c.a2, c.l};
    const Dataset data = load_csv(c.input, schema);
    const Link link(c.link, c.clip_eps);
    const FoldPlan plan = make_folds(data.n(), c.K, c.seed);
    EstimateReport report;
    std::string estimator;
    if (c.subcommand == "estimate-main") {
        const NuisanceFit nuis = nuisance_main(data, link, c.learner, c.learner, c.learner, plan);
        report = estimate_main(data, link, nuis);
        estimator = "main";
    } else if (c.assume_indep) {
        report = estimate_interaction_indep(data, link, nuisance_interaction(data, link, c.learner, plan));
        estimator = "interaction_indep";
    } else {
        report = estimate_interaction_proj(data, link, c.learner, plan, c.ace);
        estimator = "interaction_proj";
    }
    nlohmann::json j = to_json(report, c.include_influence);
    j["estimator"] = estimator;
    j["link"] = to_string(c.link);
    emit(j.dump(2) + "\n", c.output, out);
    return 0;
}

int run_simulate(const CliConfig& c, std::ostream& out, std::ostream& err) {
    StudyConfig study = study_config_from_json(read_json_file(c.config));
    if (c.reps) {
        if (*c.reps < 1) throw ConfigError("--reps must be positive");
        study.reps = *c.reps;
    }
    const SimResult result = run_study(study, c.threads, &err);
    if (!c.replicates_output.empty()) write_replicates_csv(result, c.replicates_output);
    std::ostringstream csv;
    write_summary_csv(result, csv);
    emit(csv.str(), c.output, out);
    return 0;
}

int run_oracle(const CliConfig& c, std::ostream& out) {
    Target t;
    if (c.family.empty()) throw ConfigError("--family is required");
    const DgpFamily family = parse_dgp_family(c.family);
    if (family == DgpFamily::illustration) {
        t.value = illustration_truth(c.illustration_code_variant);
        t.source = "quadrature";
    } else if (is_main_family(family)) {
        if (c.estimator.empty()) throw ConfigError("--estimator is required for main-effect families");
        t = oracle_limit(c.estimator, experiment_id(family), c.n_large, c.oracle_reps, c.seed, c.sigma_seed,
                         c.literal_exposure_link);
    } else if (is_interaction_family(family)) {
        t.value = family == DgpFamily::inter_exp3 ? 5.0 : 0.0;
        t.source = "dgp";
    } else {
        if (c.config.empty()) throw ConfigError("--config is required for custom_discrete");
        const DiscreteDgp dgp = discrete_dgp_from_json(read_json_file(c.config));
        t.value = brute_force_estimand(dgp, parse_estimand_kind(c.estimand), Link(c.link, c.clip_eps));
        t.source = "brute_force";
    }
    const nlohmann::json j{{"schema_version", 1},
                           {"family", c.family},
                           {"estimator", c.estimator},
                           {"target", t.value},
                           {"source", t.source},
                           {"mc_se", t.mc_se}};
    emit(j.dump(2) + "\n", c.output, out);
    return 0;
}

}  // namespace

std::optional<CliConfig> parse_cli(int argc, const char* const* argv, std::ostream& out) {
    CLI::App app{"Assumption-lean GLM main-effect and interaction estimation"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    CliConfig c;
    std::string link = "identity";
    std::string l_list;
    LearnerFlags lf;
    std::optional<std::string> a2;
    std::optional<int> reps;

    auto add_estimation = [&](CLI::App* sub, bool interaction) {
        sub->add_option("--input", c.input, "CSV file with a header row")->required();
        sub->add_option("--y", c.y, "Outcome column")->required();
        sub->add_option("--a", c.a1, "Exposure column")->required();
        if (interaction) sub->add_option("--a2", a2, "Second exposure column")->required();
        sub->add_option("--l", l_list, "Comma-separated covariate columns")->required();
        sub->add_option("--link", link, "Link: identity, log or logit")->capture_default_str();
        sub->add_option("--clip-eps", c.clip_eps, "Clipping bound for fitted probabilities")->capture_default_str();
        sub->add_option("--K", c.K, "Cross-fitting folds")->capture_default_str();
        sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
        sub->add_option("--output", c.output, "Also write the JSON report to this file");
        sub->add_flag("--include-influence", c.include_influence, "Include per-row influence values");
        add_learner_flags(sub, lf);
    };

    auto* est_main = app.add_subcommand("estimate-main", "Estimate the main-effect parameter");
    add_estimation(est_main, false);
    auto* est_int = app.add_subcommand("estimate-interaction", "Estimate the interaction parameter");
    add_estimation(est_int, true);
    est_int->add_flag("--assume-indep", c.assume_indep,
                      "Assume the exposures are independent given the covariates");
    est_int->add_option("--ace-tol", c.ace.tol, "Relative tolerance for the projection iterations")
        ->capture_default_str();
    est_int->add_option("--ace-max-iter", c.ace.max_iter, "Maximum projection iterations")->capture_default_str();

    auto* sim = app.add_subcommand("simulate", "Run a simulation study from a JSON config");
    sim->add_option("--config", c.config, "Study config JSON")->required();
    sim->add_option("--output", c.output, "Summary CSV path (also printed)");
    sim->add_option("--replicates-output", c.replicates_output, "Per-replicate CSV path");
    sim->add_option("--reps", reps, "Override the number of replicates");
    sim->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();

    auto* orc = app.add_subcommand("oracle", "Compute the target value of a simulation design");
    orc->add_option("--family", c.family, "DGP family")->required();
    orc->add_option("--estimator", c.estimator, "Estimator whose limit is computed (main-effect families)");
    orc->add_option("--n-large", c.n_large, "Sample size per oracle replicate")->capture_default_str();
    orc->add_option("--reps", c.oracle_reps, "Oracle replicates")->capture_default_str();
    orc->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    orc->add_option("--sigma-seed", c.sigma_seed, "Covariance seed")->capture_default_str();
    orc->add_flag("--literal-exposure-link", c.literal_exposure_link,
                  "Use the clipped linear exposure probability instead of expit");
    orc->add_flag("--code-variant", c.illustration_code_variant, "Illustration with L ~ N(1, 1)");
    orc->add_option("--config", c.config, "Discrete support JSON (custom_discrete)");
    orc->add_option("--estimand", c.estimand, "main, inter_indep or inter_proj")->capture_default_str();
    orc->add_option("--link", link, "Link for custom_discrete")->capture_default_str();
    orc->add_option("--output", c.output, "Also write the JSON result to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return std::nullopt;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return std::nullopt;
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }
    for (auto* sub : {est_main, est_int, sim, orc}) {
        if (sub->parsed()) c.subcommand = sub->get_name();
    }
    c.link = parse_link_kind(link);
    c.l = split_list(l_list);
    c.a2 = a2;
    c.reps = reps;
    if (c.subcommand == "estimate-main" || c.subcommand == "estimate-interaction") {
        if (c.l.empty()) throw ConfigError("--l must name at least one covariate column");
        c.learner = learner_from_flags(lf, c.seed);
    }
    if (c.subcommand == "estimate-interaction" && (!(c.ace.tol > 0.0) || c.ace.max_iter < 1)) {
        throw ConfigError("--ace-tol must be positive and --ace-max-iter at least 1");
    }
    return c;
}

int execute_cli(const CliConfig& c, std::ostream& out, std::ostream& err) {
    try {
        if (c.subcommand == "estimate-main" || c.subcommand == "estimate-interaction") return run_estimate(c, out);
        if (c.subcommand == "simulate") return run_simulate(c, out, err);
        if (c.subcommand == "oracle") return run_oracle(c, out);
        throw ConfigError("unknown subcommand '" + c.subcommand + "'");
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IngestionError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const EstimationError& e) {
        err << "estimation failed: " << e.what() << "\n";
        return 3;
    } catch (const DomainError& e) {
        err << "estimation failed: " << e.what() << "\n";
        return 3;
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    std::optional<CliConfig> config;
    try {
        config = parse_cli(argc, argv, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IngestionError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    if (!config) return 0;
    return execute_cli(*config, out, err);
}

int run_cli(int argc, const char* const* argv) { return run_cli(argc, argv, std::cout, std::cerr); }

}  // namespace alglm
