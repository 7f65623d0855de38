#pragma once

#include "dreambox/energy.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dreambox {

/// SHA-256 of the shipped template resource, one template per line.
inline constexpr std::string_view kPromptResourceSha256 =
  "e086e45685a5f0081ea0f72201829624d5a9d4a3d7dece4aa3bcc0d7a0894ab0";
inline constexpr std::string_view kPromptResourceVersion = "generic_prompts_v1";
inline constexpr int kPromptTemplateCount = 20;

struct PromptTemplate
{
  int index = 0; ///< 1-based
  std::string text;
};

/// Raw text of the built-in template resource.
std::string_view prompt_resource_text();

/// Splits a resource into templates; each line needs exactly one "{}".
/// Throws ContractError when the checksum differs from `expected_sha256`.
std::vector<PromptTemplate> parse_prompt_templates(std::string_view text,
                                                   std::string_view expected_sha256 = kPromptResourceSha256);

/// The 20 built-in templates, checksum-validated on first use.
const std::vector<PromptTemplate>& prompt_templates();

enum class PromptKind { generic_text, perturbed_embedding };

struct PromptSpec
{
  PromptKind kind = PromptKind::generic_text;
  std::optional<std::string> text;
  std::optional<Vector<double>> embedding;
  std::optional<double> sigma;
  std::optional<std::uint64_t> noise_seed;
  std::optional<int> template_index;

  /// Enforces the field-presence rules of each kind.
  void validate() const;

  /// Stable digest of the conditioning content (text or embedding bytes).
  std::string digest() const;
};

PromptSpec render_generic_prompt(int template_index, std::string_view class_name);

struct ClassEmbedding
{
  std::string class_name;
  Vector<double> vector;
  std::string embedder_id;
};

/// Text-embedding service. Implementations must be safe for concurrent
/// calls unless `serialized()` is true, in which case callers hold a lock.
class Embedder
{
public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual std::vector<Vector<double>> embed(std::span<const std::string> texts) = 0;
};

/// Deterministic stand-in: a unit-norm pseudo-random vector per name,
/// keyed by a SHA-256 of the text.
class MockEmbedder : public Embedder
{
public:
  explicit MockEmbedder(int dim = 64);
  std::string id() const override;
  std::vector<Vector<double>> embed(std::span<const std::string> texts) override;
  int dim() const { return dim_; }

private:
  int dim_;
};

struct HttpAdapterOptions
{
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
};

/// POST {"texts": [...]} -> {"dim": d, "vectors": [[...], ...]}.
class HttpEmbedder : public Embedder
{
public:
  HttpEmbedder(HttpAdapterOptions options, std::optional<int> expected_dim = std::nullopt, bool serialized = false);
  std::string id() const override;
  std::vector<Vector<double>> embed(std::span<const std::string> texts) override;

private:
  HttpAdapterOptions options_;
  std::optional<int> expected_dim_;
  bool serialized_;
  std::mutex mutex_;
};

ClassEmbedding embed_class_name(std::string_view class_name, Embedder& embedder);

/// zeta + sigma * eps with eps ~ N(0, I) drawn once from `noise_seed`.
template <typename Derived>
Vector<typename Derived::Scalar> perturbed(const Eigen::MatrixBase<Derived>& zeta, typename Derived::Scalar sigma,
                                           std::uint64_t noise_seed)
{
  using Scalar = typename Derived::Scalar;
  if (!(sigma >= Scalar(0)))
    throw std::invalid_argument("perturb_embedding: sigma must be >= 0");
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  Vector<Scalar> out(zeta.size());
  for (Eigen::Index i = 0; i < zeta.size(); ++i)
    out[i] = zeta[i] + sigma * normal(rng);
  if (!out.allFinite())
    throw std::domain_error("perturb_embedding: non-finite result");
  return out;
}

PromptSpec perturb_embedding(const ClassEmbedding& zeta, double sigma, std::uint64_t noise_seed);

} // namespace dreambox
