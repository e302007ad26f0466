#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "json.hpp"

namespace alglm {

enum class LearnerKind { forest, kernel, ridge_linear, ridge_logistic };

std::string to_string(LearnerKind kind);
LearnerKind parse_learner_kind(std::string_view name);

struct LearnerSpec {
    LearnerKind kind = LearnerKind::forest;

    // forest
    int n_trees = 500;
    int min_leaf = 5;
    int mtry = 0;  // 0 selects ceil(p / 3); values above p use all p features
    double bootstrap_fraction = 0.632;  // subsample drawn without replacement

    // kernel; nullopt means tune by cross-validation
    std::optional<double> bandwidth;

    // ridge_linear / ridge_logistic; nullopt means tune by cross-validation
    std::optional<double> lambda;

    int cv_folds = 5;
    std::uint64_t seed = 1;

    // Throws ConfigError when a numeric setting is out of range.
    void validate() const;
};

nlohmann::json to_json(const LearnerSpec& spec);
LearnerSpec learner_spec_from_json(const nlohmann::json& j);

// Same spec with the seed replaced by a child seed for the given purpose.
LearnerSpec with_seed(const LearnerSpec& spec, std::string_view tag, std::uint64_t index);

namespace detail {
class Model {
public:
    virtual ~Model() = default;
    virtual Eigen::VectorXd predict(const Eigen::MatrixXd& x) const = 0;
    virtual std::string summary() const = 0;
};
}  // namespace detail

// A fitted regression function. Cheap to copy; the fitted state is shared and
// immutable.
class Predictor {
public:
    Predictor(std::shared_ptr<const detail::Model> model, std::size_t d_in, double t_min,
              double t_max, std::optional<Eigen::VectorXd> oob = std::nullopt);

    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;
    std::size_t d_in() const { return d_in_; }
    double t_min() const { return t_min_; }
    double t_max() const { return t_max_; }
    std::string summary() const { return model_->summary(); }

    // Out-of-bag predictions for the training rows (forests only).
    const std::optional<Eigen::VectorXd>& oob_predictions() const { return oob_; }

private:
    std::shared_ptr<const detail::Model> model_;
    std::size_t d_in_;
    double t_min_;
    double t_max_;
    std::optional<Eigen::VectorXd> oob_;
};

// Fit a learner. Requires at least 10 rows and one column of finite values.
// A constant target yields a constant predictor.
Predictor fit_learner(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& t);

// Predictions for the training rows that do not use each row's own target:
// out-of-bag averages for forests, cv_folds-fold cross-fitting otherwise.
Eigen::VectorXd fit_predict_held_out(const LearnerSpec& spec, const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& t);

// Tuning grids, exposed for tests.
Eigen::VectorXd kernel_bandwidth_grid(std::size_t m, std::size_t d);
Eigen::VectorXd ridge_lambda_grid();

// Index of the smallest score; ties resolve to the later grid entry, which by
// convention is the smoother setting.
std::size_t argmin_prefer_last(const Eigen::VectorXd& scores, double rel_tol = 1e-12);

}  // namespace alglm
