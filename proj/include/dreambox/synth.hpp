#pragma once

#include "dreambox/dataset.hpp"
#include "dreambox/image.hpp"
#include "dreambox/prompts.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dreambox {

/// Rasterized inpainting region [x0, x1) x [y0, y1) in integer pixels.
struct MaskSpec
{
  int image_width = 0;
  int image_height = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool full_image() const { return x0 == 0 && y0 == 0 && x1 == image_width && y1 == image_height; }

  friend bool operator==(const MaskSpec&, const MaskSpec&) = default;
};

/// Rounds outward (floor on the top-left corner, ceil on the bottom-right)
/// and clamps to the image. Throws on degenerate or out-of-image boxes.
MaskSpec mask_from_box(const BoundingBox& box, int image_width, int image_height);

struct GeneratorRequest
{
  RgbImage image;
  MaskSpec mask;
  PromptSpec prompt;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GeneratorResult
{
  RgbImage image;
  std::string generator_id;
  double latency_seconds = 0;
};

/// Masked image generator f(x, prompt, mask).
class Generator
{
public:
  virtual ~Generator() = default;
  virtual std::string id() const = 0;
  /// Upper bound on concurrent generate() calls.
  virtual int max_in_flight() const = 0;
  virtual GeneratorResult generate(const GeneratorRequest& request) = 0;
};

/// Deterministic procedural texture inside the mask, input bytes elsewhere.
GeneratorResult mock_generate(const GeneratorRequest& request);

class MockGenerator : public Generator
{
public:
  explicit MockGenerator(int max_in_flight = 8) : max_in_flight_(max_in_flight) {}
  std::string id() const override { return "mock-generator-v1"; }
  int max_in_flight() const override { return max_in_flight_; }
  GeneratorResult generate(const GeneratorRequest& request) override { return mock_generate(request); }

private:
  int max_in_flight_;
};

/// JSON-over-HTTP generator service, images carried as base64 PNG.
class HttpGenerator : public Generator
{
public:
  HttpGenerator(HttpAdapterOptions options, int max_in_flight = 1);
  std::string id() const override;
  int max_in_flight() const override { return max_in_flight_; }
  GeneratorResult generate(const GeneratorRequest& request) override;

private:
  HttpAdapterOptions options_;
  int max_in_flight_;
};

/// Wire encoding shared by HttpGenerator and test servers.
nlohmann::json generator_request_to_json(const GeneratorRequest& request);
GeneratorRequest generator_request_from_json(const nlohmann::json& body);

struct InpaintResult
{
  RgbImage image;
  std::vector<std::size_t> replaced; ///< indices into the input box list
  std::vector<PromptSpec> prompts;   ///< one per replaced box
  std::vector<std::uint64_t> generator_seeds;
  std::string generator_id;
};

using PromptFactory = std::function<PromptSpec(const BoundingBox& box, std::size_t box_index)>;

/// Inpaints every eligible box in list order, each step operating on the
/// previous step's output. The seed for box i is derive_seed(seed, {i}).
InpaintResult inpaint_sequence(const RgbImage& image, std::span<const BoundingBox> boxes,
                               const PromptFactory& prompt_for, Generator& generator, std::uint64_t seed);

struct SynthesisOptions
{
  std::size_t n = 0;
  Strategy strategy = Strategy::generic;
  std::optional<double> sigma;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct SynthesisSummary
{
  std::size_t sampled = 0;          ///< output images produced
  std::size_t rejected_draws = 0;   ///< draws without any eligible box
  std::size_t failures = 0;         ///< images whose generation failed
  double eligible_image_fraction = 0;
};

struct SynthesisResult
{
  DetectionDataset dataset;
  SynthesisManifest manifest;
  SynthesisSummary summary;
};

inline constexpr std::string_view kOodImageDir = "ood_images";
inline constexpr std::string_view kOodAnnotationFile = "ood_annotations.json";
inline constexpr std::string_view kManifestFile = "manifest.jsonl";

/// Samples n images (with repetition, rejecting ones without eligible
/// boxes), inpaints each, and writes images, annotations and manifest under
/// `out_dir`. Nothing is left behind on failure.
SynthesisResult build_ood_dataset(const DetectionDataset& d_in, const SynthesisOptions& options,
                                  Generator& generator, Embedder* embedder, const std::filesystem::path& out_dir);

} // namespace dreambox
