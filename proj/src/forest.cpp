#include "forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alglm/rng.hpp"

namespace alglm::detail {

double Tree::predict_row(const Eigen::MatrixXd& x, Eigen::Index row) const {
    int node = 0;
    while (feature[static_cast<std::size_t>(node)] >= 0) {
        const auto k = static_cast<std::size_t>(node);
        node = x(row, feature[k]) <= threshold[k] ? left[k] : right[k];
    }
    return value[static_cast<std::size_t>(node)];
}

Eigen::VectorXd ForestModel::predict(const Eigen::MatrixXd& x) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(x.rows());
    for (const auto& tree : trees_) {
        for (Eigen::Index i = 0; i < x.rows(); ++i) out[i] += tree.predict_row(x, i);
    }
    out /= static_cast<double>(trees_.size());
    out.array() += offset_;
    return out;
}

std::string ForestModel::summary() const {
    std::size_t nodes = 0;
    for (const auto& t : trees_) nodes += t.value.size();
    return "forest(trees=" + std::to_string(trees_.size()) +
           ", mean_nodes=" + std::to_string(trees_.empty() ? 0 : nodes / trees_.size()) + ")";
}

namespace {

struct NodeTask {
    int node;
    std::size_t lo;
    std::size_t hi;
};

class TreeBuilder {
public:
    TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& t, int min_leaf, int mtry)
        : x_(x), t_(t), p_(static_cast<std::size_t>(x.cols())), min_leaf_(min_leaf), mtry_(mtry),
          goes_left_(static_cast<std::size_t>(x.rows()), 0) {}

    // order holds, for each feature, the in-bag rows sorted by that feature;
    // feature j occupies order[j*m, (j+1)*m).
    Tree build(std::vector<int>& order, std::size_t m, RngStream& rng) {
        m_ = m;
        order_ = &order;
        buffer_.resize(m);
        features_.resize(p_);
        Tree tree;
        new_node(tree);
        std::vector<NodeTask> stack{{0, 0, m}};
        while (!stack.empty()) {
            const NodeTask task = stack.back();
            stack.pop_back();
            split_node(tree, task, rng, stack);
        }
        return tree;
    }

private:
    static int new_node(Tree& tree) {
        tree.feature.push_back(-1);
        tree.threshold.push_back(0.0);
        tree.left.push_back(-1);
        tree.right.push_back(-1);
        tree.value.push_back(0.0);
        return static_cast<int>(tree.value.size() - 1);
    }

    void split_node(Tree& tree, const NodeTask& task, RngStream& rng, std::vector<NodeTask>& stack) {
        const std::vector<int>& ord = *order_;
        const std::size_t count = task.hi - task.lo;
        double sum = 0.0;
        double tmin = INFINITY, tmax = -INFINITY;
        for (std::size_t k = task.lo; k < task.hi; ++k) {
            const double v = t_[ord[k]];
            sum += v;
            tmin = std::min(tmin, v);
            tmax = std::max(tmax, v);
        }
        const auto node = static_cast<std::size_t>(task.node);
        tree.value[node] = sum / static_cast<double>(count);
        if (count < 2 * static_cast<std::size_t>(min_leaf_) || tmax <= tmin) return;

        // Candidate features: a random subset of size mtry, scanned in
        // ascending index order so ties resolve to the lowest feature.
        std::iota(features_.begin(), features_.end(), 0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(mtry_); ++i) {
            const std::size_t j = i + rng.uniform_index(p_ - i);
            std::swap(features_[i], features_[j]);
        }
        std::sort(features_.begin(), features_.begin() + mtry_);

        const double parent = sum * sum / static_cast<double>(count);
        const double tol = 1e-12 * std::max(1.0, std::abs(parent));
        double best_gain = tol;
        int best_feature = -1;
        std::size_t best_pos = 0;
        for (int f = 0; f < mtry_; ++f) {
            const std::size_t j = features_[static_cast<std::size_t>(f)];
            const int* rows = ord.data() + j * m_;
            const double* col = x_.data() + j * static_cast<std::size_t>(x_.rows());
            double left_sum = 0.0;
            const std::size_t last = task.hi - static_cast<std::size_t>(min_leaf_);
            for (std::size_t k = task.lo; k < task.hi - 1; ++k) {
                left_sum += t_[rows[k]];
                const std::size_t nl = k - task.lo + 1;
                if (nl < static_cast<std::size_t>(min_leaf_)) continue;
                if (k >= last) break;
                if (!(col[rows[k]] < col[rows[k + 1]])) continue;
                const double nr = static_cast<double>(count - nl);
                const double right_sum = sum - left_sum;
                const double gain = left_sum * left_sum / static_cast<double>(nl) +
                                    right_sum * right_sum / nr - parent;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = static_cast<int>(j);
                    best_pos = k;
                }
            }
        }
        if (best_feature < 0) return;

        const auto bj = static_cast<std::size_t>(best_feature);
        const int* brows = ord.data() + bj * m_;
        const double* bcol = x_.data() + bj * static_cast<std::size_t>(x_.rows());
        const double a = bcol[brows[best_pos]];
        const double b = bcol[brows[best_pos + 1]];
        double thr = a + (b - a) / 2.0;
        if (!(thr >= a && thr < b)) thr = a;

        for (std::size_t k = task.lo; k <= best_pos; ++k) goes_left_[static_cast<std::size_t>(brows[k])] = 1;
        for (std::size_t k = best_pos + 1; k < task.hi; ++k) goes_left_[static_cast<std::size_t>(brows[k])] = 0;
        const std::size_t mid = best_pos + 1;
        for (std::size_t j = 0; j < p_; ++j) {
            if (j == bj) continue;
            partition(j, task.lo, task.hi);
        }

        const int l = new_node(tree);
        const int r = new_node(tree);
        tree.feature[node] = best_feature;
        tree.threshold[node] = thr;
        tree.left[node] = l;
        tree.right[node] = r;
        stack.push_back({r, mid, task.hi});
        stack.push_back({l, task.lo, mid});
    }

    // Stable partition of feature j's slice so left-going rows come first.
    void partition(std::size_t j, std::size_t lo, std::size_t hi) {
        int* rows = order_->data() + j * m_;
        std::size_t w = lo;
        std::size_t nb = 0;
        for (std::size_t k = lo; k < hi; ++k) {
            const int r = rows[k];
            if (goes_left_[static_cast<std::size_t>(r)]) {
                rows[w++] = r;
            } else {
                buffer_[nb++] = r;
            }
        }
        std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(nb), rows + w);
    }

    const Eigen::MatrixXd& x_;
    const Eigen::VectorXd& t_;
    std::size_t p_;
    int min_leaf_;
    int mtry_;
    std::size_t m_ = 0;
    std::vector<int>* order_ = nullptr;
    std::vector<int> buffer_;
    std::vector<std::size_t> features_;
    std::vector<char> goes_left_;
};

}  // namespace

ForestFit fit_forest(const LearnerSpec& spec, const Eigen::MatrixXd& x, const Eigen::VectorXd& t_raw) {
    const auto n = static_cast<std::size_t>(x.rows());
    const std::size_t p = static_cast<std::size_t>(x.cols());
    const int mtry = spec.mtry > 0 ? std::min<int>(spec.mtry, static_cast<int>(p))
                                   : static_cast<int>((p + 2) / 3);
    std::size_t m = static_cast<std::size_t>(std::llround(spec.bootstrap_fraction * static_cast<double>(n)));
    m = std::clamp<std::size_t>(m, std::min<std::size_t>(n, 2), n);

    // Center the target so split gains do not lose precision to a large offset.
    const double offset = t_raw.mean();
    const Eigen::VectorXd t = t_raw.array() - offset;

    std::vector<std::vector<int>> sorted(p, std::vector<int>(n));
    for (std::size_t j = 0; j < p; ++j) {
        auto& s = sorted[j];
        std::iota(s.begin(), s.end(), 0);
        const double* col = x.data() + j * n;
        std::stable_sort(s.begin(), s.end(), [col](int a, int b) { return col[a] < col[b]; });
    }

    TreeBuilder builder(x, t, std::max(1, spec.min_leaf), mtry);
    std::vector<Tree> trees;
    trees.reserve(static_cast<std::size_t>(spec.n_trees));
    std::vector<int> order(p * m);
    std::vector<char> in_bag(n);
    std::vector<std::size_t> idx(n);
    Eigen::VectorXd oob_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXi oob_count = Eigen::VectorXi::Zero(static_cast<Eigen::Index>(n));

    for (int b = 0; b < spec.n_trees; ++b) {
        RngStream rng(spec.seed, "tree", static_cast<std::uint64_t>(b));
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::fill(in_bag.begin(), in_bag.end(), 0);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t j = i + rng.uniform_index(n - i);
            std::swap(idx[i], idx[j]);
            in_bag[idx[i]] = 1;
        }
        for (std::size_t j = 0; j < p; ++j) {
            int* dst = order.data() + j * m;
            for (int r : sorted[j]) {
                if (in_bag[static_cast<std::size_t>(r)]) *dst++ = r;
            }
        }
        trees.push_back(builder.build(order, m, rng));
        if (m < n) {
            const Tree& tree = trees.back();
            for (std::size_t i = m; i < n; ++i) {
                const auto r = static_cast<Eigen::Index>(idx[i]);
                oob_sum[r] += tree.predict_row(x, r);
                oob_count[r] += 1;
            }
        }
    }

    auto model = std::make_shared<ForestModel>(std::move(trees), offset);
    ForestFit fit;
    const Eigen::VectorXd full = model->predict(x);
    fit.oob.resize(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        // A row that was in every subsample has no out-of-bag trees; fall back
        // to the full-forest prediction.
        fit.oob[i] = oob_count[i] > 0 ? oob_sum[i] / oob_count[i] + offset : full[i];
    }
    fit.model = std::move(model);
    return fit;
}

}  // namespace alglm::detail
