#include <gtest/gtest.h>

#include "alglm/crossfit.hpp"
#include "alglm/simulation.hpp"
#include "test_util.hpp"

using namespace alglm;

namespace {

LearnerSpec small_forest(std::uint64_t seed = 3) {
    LearnerSpec s;
    s.kind = LearnerKind::forest;
    s.n_trees = 40;
    s.seed = seed;
    return s;
}

}  // namespace

TEST(Crossfit, ChangingOneTargetOnlyMovesOtherFolds) {
    RngStream rng(1, "cf");
    const Eigen::MatrixXd x = testutil::normal_matrix(80, 2, rng);
    Eigen::VectorXd t = x.col(0) + testutil::normal_matrix(80, 1, rng).col(0);
    const FoldPlan plan = make_folds(80, 4, 5);
    const Eigen::VectorXd before = crossfit_predict(x, t, small_forest(), plan);
    t[7] += 25.0;
    const Eigen::VectorXd after = crossfit_predict(x, t, small_forest(), plan);
    const int f7 = plan.assignments[7];
    for (int i = 0; i < 80; ++i) {
        if (plan.assignments[i] == f7) EXPECT_EQ(before[i], after[i]) << "row " << i;
    }
    EXPECT_NE(before, after);
}

TEST(Crossfit, PredictAtReturnsOneVectorPerEvalMatrix) {
    RngStream rng(2, "cf");
    const Eigen::MatrixXd x = testutil::normal_matrix(60, 2, rng);
    const Eigen::VectorXd t = x.col(1);
    const FoldPlan plan = make_folds(60, 3, 1);
    const auto out = crossfit_predict_at(x, t, small_forest(), plan, {x, Eigen::MatrixXd::Zero(60, 2)});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], crossfit_predict(x, t, small_forest(), plan));
}

TEST(NuisanceMain, BinaryExposureUsesTwoPointAverage) {
    RngStream rng(3, "nm");
    const int n = 100;
    Eigen::MatrixXd l = testutil::normal_matrix(n, 1, rng);
    Eigen::VectorXd a(n), y(n);
    for (int i = 0; i < n; ++i) {
        a[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        y[i] = l(i, 0) + rng.normal();
    }
    const Dataset d(y, a, std::nullopt, l);
    const NuisanceFit nf = nuisance_main(d, Link(LinkKind::identity), small_forest(), small_forest(),
                                         small_forest(), make_folds(n, 5, 2));
    ASSERT_TRUE(nf.mu_at.has_value());
    const Eigen::VectorXd e = nf.e_a1;
    const Eigen::VectorXd expected = e.cwiseProduct(nf.mu_at->col(1)) + (1.0 - e.array()).matrix().cwiseProduct(nf.mu_at->col(0));
    EXPECT_LT((nf.m_g - expected).cwiseAbs().maxCoeff(), 1e-12);
    for (int i = 0; i < n; ++i) {
        EXPECT_EQ(nf.mu[i], a[i] == 1.0 ? (*nf.mu_at)(i, 1) : (*nf.mu_at)(i, 0));
    }
}

TEST(NuisanceMain, LogitClipsBoundaryFits) {
    // Outcome all zero in one arm makes forest fits hit exactly 0.
    RngStream rng(4, "nm");
    const int n = 80;
    Eigen::MatrixXd l = testutil::normal_matrix(n, 1, rng);
    Eigen::VectorXd a(n), y(n);
    for (int i = 0; i < n; ++i) {
        a[i] = i % 2;
        y[i] = a[i] == 1.0 && rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    const Dataset d(y, a, std::nullopt, l);
    const NuisanceFit nf = nuisance_main(d, Link(LinkKind::logit), small_forest(), small_forest(), small_forest(),
                                         make_folds(n, 4, 1));
    EXPECT_GT(nf.clip_count, 0u);
    EXPECT_GE(nf.mu.minCoeff(), 1e-6);
    EXPECT_TRUE(nf.m_g.allFinite());
}

TEST(NuisanceMain, BitReproducible) {
    const Dataset d = dgp_main(1, 200, 3, kDefaultSigmaSeed);
    const Link g(LinkKind::logit);
    const FoldPlan plan = make_folds(200, 5, 9);
    const NuisanceFit a = nuisance_main(d, g, small_forest(1), small_forest(2), small_forest(3), plan);
    const NuisanceFit b = nuisance_main(d, g, small_forest(1), small_forest(2), small_forest(3), plan);
    EXPECT_EQ(a.e_a1, b.e_a1);
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_EQ(a.m_g, b.m_g);
}

TEST(NuisanceMain, MgCloseToTruthOnFirstMainExperiment) {
    // At n = 2000 even a correctly specified logistic fit has mean absolute
    // error near 0.1 on this scale, so the check runs at n = 8000.
    const std::size_t n = 8000;
    const Dataset d = dgp_main(1, n, 17, kDefaultSigmaSeed);
    const Link g(LinkKind::logit);
    LearnerSpec s;
    s.kind = LearnerKind::ridge_logistic;
    s.seed = 5;
    const NuisanceFit nf = nuisance_main(d, g, s, s, s, make_folds(n, 10, 4));
    const MainTruth truth = main_truth(1, d.l());
    const Eigen::VectorXd m_true = truth.pi.cwiseProduct(g.eval(truth.mu1)) +
                                   (1.0 - truth.pi.array()).matrix().cwiseProduct(g.eval(truth.mu0));
    EXPECT_LT((nf.m_g - m_true).cwiseAbs().mean(), 0.1);
}
