#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace alglm {

// Outcome, one or two exposures and a covariate matrix. Immutable once built;
// the constructor validates lengths and finiteness and detects binary
// exposures.
class Dataset {
public:
    Dataset(Eigen::VectorXd y, Eigen::VectorXd a1, std::optional<Eigen::VectorXd> a2,
            Eigen::MatrixXd l, std::vector<std::string> column_names = {});

    std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
    std::size_t d() const { return static_cast<std::size_t>(l_.cols()); }

    const Eigen::VectorXd& y() const { return y_; }
    const Eigen::VectorXd& a1() const { return a1_; }
    bool has_a2() const { return a2_.has_value(); }
    const Eigen::VectorXd& a2() const;
    const Eigen::MatrixXd& l() const { return l_; }
    const std::vector<std::string>& column_names() const { return column_names_; }

    bool a1_binary() const { return a1_binary_; }
    bool a2_binary() const { return a2_binary_; }

    // Names used when writing the dataset back to CSV.
    std::string y_name = "y";
    std::string a1_name = "a1";
    std::string a2_name = "a2";

private:
    Eigen::VectorXd y_;
    Eigen::VectorXd a1_;
    std::optional<Eigen::VectorXd> a2_;
    Eigen::MatrixXd l_;
    std::vector<std::string> column_names_;
    bool a1_binary_ = false;
    bool a2_binary_ = false;
};

bool is_binary(const Eigen::VectorXd& v);

// Horizontal concatenation [v, M].
Eigen::MatrixXd prepend_column(const Eigen::VectorXd& v, const Eigen::MatrixXd& m);

// [1, M]
Eigen::MatrixXd prepend_column_ones(const Eigen::MatrixXd& m);

struct CsvSchema {
    std::string y;
    std::string a1;
    std::optional<std::string> a2;
    std::vector<std::string> l;
};

// Rows in error messages are 1-based file line numbers (the header is line 1).
Dataset load_csv(const std::string& path, const CsvSchema& schema);

// Writes y, a1, (a2), then the covariate columns, with 17 significant digits.
void write_csv(const Dataset& data, const std::string& path);

}  // namespace alglm
