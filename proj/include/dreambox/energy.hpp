#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace dreambox {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// log(1 + exp(x)) without overflow for large |x|.
template <typename Scalar>
Scalar softplus(Scalar x)
{
  using std::abs;
  using std::exp;
  using std::log1p;
  return (x > Scalar(0) ? x : Scalar(0)) + log1p(exp(-abs(x)));
}

template <typename Scalar>
Scalar logistic(Scalar x)
{
  using std::exp;
  if (x >= Scalar(0))
    return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

/// Energy of a logit vector, -log sum_k exp(g_k), via the max-shifted
/// log-sum-exp. Finite for any finite input.
template <typename Derived>
typename Derived::Scalar energy_score(const Eigen::MatrixBase<Derived>& logits)
{
  using Scalar = typename Derived::Scalar;
  using std::log;
  if (logits.size() == 0)
    throw std::invalid_argument("energy_score: empty logits");
  if (!logits.allFinite())
    throw std::invalid_argument("energy_score: non-finite logits");
  const Scalar m = logits.maxCoeff();
  return -(m + log((logits.array() - m).exp().sum()));
}

/// dE/dg = -softmax(g).
template <typename Derived>
Vector<typename Derived::Scalar> energy_gradient(const Eigen::MatrixBase<Derived>& logits)
{
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0)
    throw std::invalid_argument("energy_gradient: empty logits");
  const Scalar m = logits.maxCoeff();
  Vector<Scalar> e = (logits.array() - m).exp().matrix();
  return -e / e.sum();
}

/// The scalar-in, scalar-out head phi applied to the energy:
/// phi(E) = w_out . tanh(w_in * E + b_in) + b_out.
template <typename Scalar>
struct OodHead
{
  static constexpr int default_hidden = 16;

  Vector<Scalar> w_in;
  Vector<Scalar> b_in;
  Vector<Scalar> w_out;
  Scalar b_out = Scalar(0);

  static OodHead zeros(int hidden = default_hidden)
  {
    OodHead h;
    h.w_in = Vector<Scalar>::Zero(hidden);
    h.b_in = Vector<Scalar>::Zero(hidden);
    h.w_out = Vector<Scalar>::Zero(hidden);
    return h;
  }

  Eigen::Index hidden() const { return w_in.size(); }

  void validate() const
  {
    if (w_in.size() == 0 || b_in.size() != w_in.size() || w_out.size() != w_in.size())
      throw std::invalid_argument("OodHead: layer dimensions must be [1, hidden, 1]");
  }
};

template <typename Scalar>
struct OodHeadGradient
{
  Scalar d_energy = Scalar(0);
  Vector<Scalar> w_in, b_in, w_out;
  Scalar b_out = Scalar(0);
};

template <typename Scalar>
Scalar ood_head_forward(Scalar energy, const OodHead<Scalar>& head)
{
  head.validate();
  const Vector<Scalar> h = (head.w_in * energy + head.b_in).array().tanh().matrix();
  return head.w_out.dot(h) + head.b_out;
}

/// Gradient of phi(E) with respect to E and to every head parameter,
/// scaled by the upstream derivative `d_phi`.
template <typename Scalar>
OodHeadGradient<Scalar> ood_head_backward(Scalar energy, const OodHead<Scalar>& head, Scalar d_phi = Scalar(1))
{
  head.validate();
  const Vector<Scalar> h = (head.w_in * energy + head.b_in).array().tanh().matrix();
  const Vector<Scalar> dpre = (head.w_out.array() * (Scalar(1) - h.array().square())).matrix() * d_phi;
  OodHeadGradient<Scalar> g;
  g.d_energy = dpre.dot(head.w_in);
  g.w_in = dpre * energy;
  g.b_in = dpre;
  g.w_out = h * d_phi;
  g.b_out = d_phi;
  return g;
}

/// Probability that the object is out-of-distribution. The head's logit is
/// trained as the in-distribution logit (the in-distribution term of the
/// loss is -log sigma(phi)), so the OOD probability is sigma(-phi).
template <typename Derived>
typename Derived::Scalar ood_probability(const Eigen::MatrixBase<Derived>& logits,
                                         const OodHead<typename Derived::Scalar>& head)
{
  return logistic(-ood_head_forward(energy_score(logits), head));
}

enum class OodLabel { in, ood };

template <typename Scalar>
struct LossWithGradient
{
  Scalar loss = Scalar(0);
  /// dL/dphi per term, in input order (for the two-list form: all
  /// in-distribution terms first, then all OOD terms).
  std::vector<Scalar> grad;
};

namespace detail {

template <typename Scalar>
void check_finite(std::span<const Scalar> xs, const char* what)
{
  for (Scalar x : xs)
    if (!std::isfinite(static_cast<double>(x)))
      throw std::invalid_argument(std::string(what) + ": non-finite logit");
}

// Focal term for an in-distribution label: p = sigma(phi), q = 1 - p,
// L = q^gamma * (-log p). OOD terms use the mirror image phi -> -phi.
template <typename Scalar>
std::pair<Scalar, Scalar> focal_in_term(Scalar phi, Scalar gamma)
{
  using std::pow;
  const Scalar p = logistic(phi);
  const Scalar q = logistic(-phi);
  const Scalar nll = softplus(-phi); // -log p
  const Scalar qg = gamma == Scalar(0) ? Scalar(1) : pow(q, gamma);
  const Scalar loss = qg * nll;
  const Scalar grad = -gamma * p * qg * nll - qg * q;
  return {loss, grad};
}

} // namespace detail

/// Binary cross-entropy over the two populations: mean of -log sigma(phi)
/// over in-distribution logits plus mean of -log(1 - sigma(phi)) over OOD
/// logits. An empty side contributes zero.
template <typename Scalar>
LossWithGradient<Scalar> ood_bce_loss_with_gradient(std::span<const Scalar> phi_in, std::span<const Scalar> phi_ood)
{
  if (phi_in.empty() && phi_ood.empty())
    throw std::invalid_argument("ood_bce_loss: both populations are empty");
  detail::check_finite(phi_in, "ood_bce_loss");
  detail::check_finite(phi_ood, "ood_bce_loss");
  LossWithGradient<Scalar> r;
  r.grad.reserve(phi_in.size() + phi_ood.size());
  if (!phi_in.empty()) {
    const Scalar n = Scalar(phi_in.size());
    Scalar sum = 0;
    for (Scalar phi : phi_in) {
      sum += softplus(-phi);
      r.grad.push_back(-logistic(-phi) / n);
    }
    r.loss += sum / n;
  }
  if (!phi_ood.empty()) {
    const Scalar n = Scalar(phi_ood.size());
    Scalar sum = 0;
    for (Scalar phi : phi_ood) {
      sum += softplus(phi);
      r.grad.push_back(logistic(phi) / n);
    }
    r.loss += sum / n;
  }
  return r;
}

template <typename Scalar>
Scalar ood_bce_loss(std::span<const Scalar> phi_in, std::span<const Scalar> phi_ood)
{
  return ood_bce_loss_with_gradient(phi_in, phi_ood).loss;
}

/// Focal variant: weight * (mean over in terms + mean over OOD terms) of
/// (1 - p_t)^gamma * (-log p_t). With gamma = 0 and weight = 1 this is
/// exactly ood_bce_loss on the same split.
template <typename Scalar>
LossWithGradient<Scalar> ood_focal_loss_with_gradient(std::span<const Scalar> phis, std::span<const OodLabel> labels,
                                                      Scalar gamma, Scalar weight)
{
  if (phis.size() != labels.size())
    throw std::invalid_argument("ood_focal_loss: logits and labels differ in length");
  if (phis.empty())
    throw std::invalid_argument("ood_focal_loss: no terms");
  if (!(gamma >= Scalar(0)))
    throw std::invalid_argument("ood_focal_loss: gamma must be >= 0");
  detail::check_finite(phis, "ood_focal_loss");

  std::size_t n_in = 0;
  for (auto l : labels)
    n_in += l == OodLabel::in;
  const std::size_t n_ood = labels.size() - n_in;

  LossWithGradient<Scalar> r;
  r.grad.reserve(phis.size());
  Scalar sum_in = 0, sum_ood = 0;
  for (std::size_t i = 0; i < phis.size(); ++i) {
    if (labels[i] == OodLabel::in) {
      auto [l, g] = detail::focal_in_term(phis[i], gamma);
      sum_in += l;
      r.grad.push_back(weight * g / Scalar(n_in));
    } else {
      auto [l, g] = detail::focal_in_term(-phis[i], gamma);
      sum_ood += l;
      r.grad.push_back(-weight * g / Scalar(n_ood));
    }
  }
  if (n_in > 0)
    r.loss += sum_in / Scalar(n_in);
  if (n_ood > 0)
    r.loss += sum_ood / Scalar(n_ood);
  r.loss *= weight;
  return r;
}

template <typename Scalar>
Scalar ood_focal_loss(std::span<const Scalar> phis, std::span<const OodLabel> labels, Scalar gamma, Scalar weight)
{
  return ood_focal_loss_with_gradient(phis, labels, gamma, weight).loss;
}

} // namespace dreambox
