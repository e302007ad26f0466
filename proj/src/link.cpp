#include "alglm/link.hpp"

#include <cmath>
#include <limits>

#include "alglm/errors.hpp"

namespace alglm {

std::string to_string(LinkKind kind) {
    switch (kind) {
        case LinkKind::identity: return "identity";
        case LinkKind::log: return "log";
        case LinkKind::logit: return "logit";
    }
    return "unknown";
}

LinkKind parse_link_kind(std::string_view name) {
    if (name == "identity") return LinkKind::identity;
    if (name == "log") return LinkKind::log;
    if (name == "logit") return LinkKind::logit;
    throw ConfigError("unknown link '" + std::string(name) + "' (expected identity, log or logit)");
}

double expit(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) {
    return std::log(p / (1.0 - p));
}

double clip_prob(double p, double eps, ClipCounter* counter) {
    const double clipped = std::min(std::max(p, eps), 1.0 - eps);
    if (counter != nullptr && clipped != p) {
        ++counter->count;
    }
    return clipped;
}

Link::Link(LinkKind kind, double clip_eps) : kind_(kind), clip_eps_(clip_eps) {
    if (!(clip_eps > 0.0 && clip_eps < 0.5)) {
        throw ConfigError("clip_eps must lie in (0, 0.5)");
    }
}

namespace {
void require_finite(double x, std::size_t index) {
    if (!std::isfinite(x)) {
        throw DomainError("non-finite link argument at index " + std::to_string(index));
    }
}
}  // namespace

double Link::eval(double x) const {
    require_finite(x, 0);
    switch (kind_) {
        case LinkKind::identity: return x;
        case LinkKind::log: return std::log(x);
        case LinkKind::logit: return logit(x);
    }
    return x;
}

double Link::prime(double x) const {
    require_finite(x, 0);
    switch (kind_) {
        case LinkKind::identity: return 1.0;
        case LinkKind::log: return 1.0 / x;
        case LinkKind::logit: return 1.0 / (x * (1.0 - x));
    }
    return 1.0;
}

double Link::inverse(double x) const {
    require_finite(x, 0);
    switch (kind_) {
        case LinkKind::identity: return x;
        case LinkKind::log: return std::exp(x);
        case LinkKind::logit: return expit(x);
    }
    return x;
}

double Link::clip(double mean, ClipCounter* counter) const {
    switch (kind_) {
        case LinkKind::identity: return mean;
        case LinkKind::log: {
            if (mean < clip_eps_) {
                if (counter != nullptr) ++counter->count;
                return clip_eps_;
            }
            return mean;
        }
        case LinkKind::logit: return clip_prob(mean, clip_eps_, counter);
    }
    return mean;
}

namespace {
template <typename F>
Eigen::VectorXd map_checked(const Eigen::VectorXd& x, F&& f) {
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        require_finite(x[i], static_cast<std::size_t>(i));
        out[i] = f(x[i]);
    }
    return out;
}
}  // namespace

Eigen::VectorXd Link::eval(const Eigen::VectorXd& x) const {
    return map_checked(x, [this](double v) { return eval(v); });
}

Eigen::VectorXd Link::prime(const Eigen::VectorXd& x) const {
    return map_checked(x, [this](double v) { return prime(v); });
}

Eigen::VectorXd Link::inverse(const Eigen::VectorXd& x) const {
    return map_checked(x, [this](double v) { return inverse(v); });
}

Eigen::VectorXd Link::clip(const Eigen::VectorXd& means, ClipCounter* counter) const {
    return map_checked(means, [this, counter](double v) { return clip(v, counter); });
}

}  // namespace alglm
