#pragma once

#include <vector>

#include "alglm/learners.hpp"

namespace alglm::detail {

// Flat array storage for one regression tree. feature < 0 marks a leaf.
struct Tree {
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<double> value;

    double predict_row(const Eigen::MatrixXd& x, Eigen::Index row) const;
};

class ForestModel final : public Model {
public:
    explicit ForestModel(std::vector<Tree> trees, double offset) : trees_(std::move(trees)), offset_(offset) {}
    Eigen::VectorXd predict(const Eigen::MatrixXd& x) const override;
    std::string summary() const override;

    const std::vector<Tree>& trees() const { return trees_; }
    double offset() const { return offset_; }

private:
    std::vector<Tree> trees_;
    double offset_;
};

struct ForestFit {
    std::shared_ptr<const ForestModel> model;
    Eigen::VectorXd oob;
};

ForestFit fit_forest(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& t);

}  // namespace alglm::detail
