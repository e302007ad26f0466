#include "alglm/dataset.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "alglm/errors.hpp"

namespace alglm {

namespace {

void require_finite(const Eigen::VectorXd& v, const std::string& what) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw ConfigError(what + " has a non-finite value at row " + std::to_string(i));
        }
    }
}

}  // namespace

bool is_binary(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0 && v[i] != 1.0) return false;
    }
    return true;
}

Eigen::MatrixXd prepend_column(const Eigen::VectorXd& v, const Eigen::MatrixXd& m) {
    Eigen::MatrixXd out(m.rows(), m.cols() + 1);
    out.col(0) = v;
    out.rightCols(m.cols()) = m;
    return out;
}

Eigen::MatrixXd prepend_column_ones(const Eigen::MatrixXd& m) {
    return prepend_column(Eigen::VectorXd::Ones(m.rows()), m);
}

Dataset::Dataset(Eigen::VectorXd y, Eigen::VectorXd a1, std::optional<Eigen::VectorXd> a2,
                 Eigen::MatrixXd l, std::vector<std::string> column_names)
    : y_(std::move(y)),
      a1_(std::move(a1)),
      a2_(std::move(a2)),
      l_(std::move(l)),
      column_names_(std::move(column_names)) {
    const Eigen::Index n = y_.size();
    if (a1_.size() != n) throw ConfigError("exposure a1 length differs from outcome length");
    if (a2_ && a2_->size() != n) throw ConfigError("exposure a2 length differs from outcome length");
    if (l_.rows() != n) throw ConfigError("covariate matrix row count differs from outcome length");
    require_finite(y_, "outcome");
    require_finite(a1_, "exposure a1");
    if (a2_) require_finite(*a2_, "exposure a2");
    for (Eigen::Index j = 0; j < l_.cols(); ++j) {
        require_finite(l_.col(j), "covariate column " + std::to_string(j));
    }
    if (column_names_.empty()) {
        for (Eigen::Index j = 0; j < l_.cols(); ++j) {
            column_names_.push_back("l" + std::to_string(j + 1));
        }
    }
    if (static_cast<Eigen::Index>(column_names_.size()) != l_.cols()) {
        throw ConfigError("column_names length differs from covariate count");
    }
    a1_binary_ = is_binary(a1_);
    a2_binary_ = a2_ ? is_binary(*a2_) : false;
}

const Eigen::VectorXd& Dataset::a2() const {
    if (!a2_) throw ConfigError("dataset has no second exposure");
    return *a2_;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no, const std::string& column) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (cell.empty() || end != begin + cell.size() || errno == ERANGE || !std::isfinite(v)) {
        throw IngestionError("cannot parse value '" + cell + "' at row " + std::to_string(line_no) +
                             ", column \"" + column + "\"");
    }
    return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open CSV file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw IngestionError("CSV file '" + path + "' has no header row");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
    const auto header = split_commas(line);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < header.size(); ++j) index[header[j]] = j;

    auto locate = [&](const std::string& name) {
        const auto it = index.find(name);
        if (it == index.end()) throw IngestionError("column \"" + name + "\" not found in header");
        return it->second;
    };
    const std::size_t iy = locate(schema.y);
    const std::size_t ia1 = locate(schema.a1);
    const std::optional<std::size_t> ia2 =
        schema.a2 ? std::optional<std::size_t>(locate(*schema.a2)) : std::nullopt;
    std::vector<std::size_t> il;
    for (const auto& name : schema.l) il.push_back(locate(name));

    std::vector<double> y, a1, a2;
    std::vector<std::vector<double>> l(il.size());
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (cells.size() != header.size()) {
            throw IngestionError("row " + std::to_string(line_no) + " has " +
                                 std::to_string(cells.size()) + " cells, header has " +
                                 std::to_string(header.size()));
        }
        y.push_back(parse_cell(cells[iy], line_no, schema.y));
        a1.push_back(parse_cell(cells[ia1], line_no, schema.a1));
        if (ia2) a2.push_back(parse_cell(cells[*ia2], line_no, *schema.a2));
        for (std::size_t j = 0; j < il.size(); ++j) {
            l[j].push_back(parse_cell(cells[il[j]], line_no, schema.l[j]));
        }
    }
    const auto n = static_cast<Eigen::Index>(y.size());
    if (n == 0) throw IngestionError("CSV file '" + path + "' has no data rows");

    Eigen::MatrixXd lm(n, static_cast<Eigen::Index>(il.size()));
    for (std::size_t j = 0; j < il.size(); ++j) {
        lm.col(static_cast<Eigen::Index>(j)) = Eigen::Map<Eigen::VectorXd>(l[j].data(), n);
    }
    std::optional<Eigen::VectorXd> a2v;
    if (ia2) a2v = Eigen::Map<Eigen::VectorXd>(a2.data(), n);
    Dataset data(Eigen::Map<Eigen::VectorXd>(y.data(), n), Eigen::Map<Eigen::VectorXd>(a1.data(), n),
                 std::move(a2v), std::move(lm), schema.l);
    data.y_name = schema.y;
    data.a1_name = schema.a1;
    if (schema.a2) data.a2_name = *schema.a2;
    return data;
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot open '" + path + "' for writing");
    out << data.y_name << ',' << data.a1_name;
    if (data.has_a2()) out << ',' << data.a2_name;
    for (const auto& name : data.column_names()) out << ',' << name;
    out << '\n';
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf;
    };
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        put(data.y()[r]);
        out << ',';
        put(data.a1()[r]);
        if (data.has_a2()) {
            out << ',';
            put(data.a2()[r]);
        }
        for (Eigen::Index j = 0; j < data.l().cols(); ++j) {
            out << ',';
            put(data.l()(r, j));
        }
        out << '\n';
    }
}

}  // namespace alglm
