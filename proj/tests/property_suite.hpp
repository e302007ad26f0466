#pragma once

#include <string>
#include <vector>

namespace props {

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

// Mean influence value at the estimate, relative to its standard deviation,
// for every estimator over 100 small simulated datasets.
Check influence_mean_zero();

// Population-level estimator output with exact nuisances against the
// brute-force estimands on finite supports.
Check brute_force_main();
Check brute_force_indep();
Check brute_force_proj();
Check indep_equals_proj_under_independence();

// Nuisance perturbation: one-at-a-time offsets leave the bias at most 0.1
// delta, joint offsets give second-order bias.
Check orthogonality_single();
Check orthogonality_dual();

Check ace_trace_monotone();
Check ace_annihilates_additive_targets();
Check ace_closed_form_fixed_point();

Check link_derivatives();
Check irls_matches_ols();

std::vector<Check> run_all();

}  // namespace props
