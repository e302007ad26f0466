#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <vector>
#include <string>

#include <Eigen/Dense>

#include "alglm/rng.hpp"

namespace testutil {

// Writes text to a fresh file under the system temp directory and returns its path.
inline std::string write_temp(const std::string& name, const std::string& text) {
    const auto dir = std::filesystem::temp_directory_path() / "alglm_tests";
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    return path.string();
}

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, alglm::RngStream& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

// Gauss-Hermite (probabilists') nodes and weights for E[f(Z)], Z ~ N(0, 1),
// computed by Golub-Welsch on the Hermite recurrence.
inline void gauss_hermite(int k, Eigen::VectorXd& nodes, Eigen::VectorXd& weights) {
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i + 1 < k; ++i) {
        jac(i, i + 1) = jac(i + 1, i) = std::sqrt(static_cast<double>(i + 1));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    nodes = es.eigenvalues();
    weights = es.eigenvectors().row(0).transpose().array().square();
}

// Mean of values within each group of identical feature rows. On a dataset
// that replicates support points by their counts, this is the exact
// conditional expectation.
inline Eigen::VectorXd cell_mean(const Eigen::MatrixXd& keys, const Eigen::VectorXd& values) {
    std::map<std::vector<double>, std::pair<double, double>> acc;
    std::vector<std::vector<double>> row_keys(static_cast<std::size_t>(keys.rows()));
    for (Eigen::Index i = 0; i < keys.rows(); ++i) {
        auto& k = row_keys[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < keys.cols(); ++j) k.push_back(keys(i, j));
        auto& a = acc[k];
        a.first += values[i];
        a.second += 1.0;
    }
    Eigen::VectorXd out(values.size());
    for (Eigen::Index i = 0; i < keys.rows(); ++i) {
        const auto& a = acc[row_keys[static_cast<std::size_t>(i)]];
        out[i] = a.first / a.second;
    }
    return out;
}

}  // namespace testutil
