#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace alglm {

enum class LinkKind { identity, log, logit };

std::string to_string(LinkKind kind);
LinkKind parse_link_kind(std::string_view name);

// Counts how many values were pulled back into the link's domain.
struct ClipCounter {
    std::size_t count = 0;
};

// Clamp p into [eps, 1 - eps]. eps must lie in (0, 0.5).
double clip_prob(double p, double eps, ClipCounter* counter = nullptr);

// A link function g with its derivative and inverse. Fitted means are clipped
// into [clip_eps, 1 - clip_eps] (logit) or [clip_eps, inf) (log) before g or
// g' are evaluated.
class Link {
public:
    explicit Link(LinkKind kind = LinkKind::identity, double clip_eps = 1e-6);

    LinkKind kind() const { return kind_; }
    double clip_eps() const { return clip_eps_; }

    double eval(double x) const;
    double prime(double x) const;
    double inverse(double x) const;

    // Move a fitted mean into the domain where eval/prime are finite.
    double clip(double mean, ClipCounter* counter = nullptr) const;

    // Elementwise versions. Non-finite inputs raise DomainError naming the index.
    Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
    Eigen::VectorXd prime(const Eigen::VectorXd& x) const;
    Eigen::VectorXd inverse(const Eigen::VectorXd& x) const;
    Eigen::VectorXd clip(const Eigen::VectorXd& means, ClipCounter* counter = nullptr) const;

private:
    LinkKind kind_;
    double clip_eps_;
};

double expit(double x);
double logit(double p);

}  // namespace alglm
