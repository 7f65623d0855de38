#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dreambox {

/// Name of the sentinel category carried by replaced (synthesized) boxes.
inline constexpr std::string_view kOodCategoryName = "ood";

/// Boxes must be strictly larger than this many pixels to be inpainted.
inline constexpr double kEligibleAreaThreshold = 2000.0;

/// Axis-aligned box in continuous pixel coordinates, (x, y) = top-left.
struct BoundingBox
{
  double x = 0, y = 0, w = 0, h = 0;
  int category_id = 0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

double box_area(const BoundingBox& box);

/// True iff the box area is strictly above kEligibleAreaThreshold.
bool synthesis_eligible(const BoundingBox& box);

bool box_within_image(const BoundingBox& box, int width, int height);

struct ImageRecord
{
  std::int64_t id = 0;
  std::string file_path;
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Category
{
  int id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

struct Annotation
{
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  BoundingBox box;
  bool is_ood = false;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Images, box annotations and the category registry. Immutable after
/// construction; the constructor enforces every referential invariant.
class DetectionDataset
{
public:
  DetectionDataset() = default;
  DetectionDataset(std::vector<Category> categories, std::vector<ImageRecord> images,
                   std::vector<Annotation> annotations, std::filesystem::path image_root = {});

  const std::vector<Category>& categories() const { return categories_; }
  const std::vector<ImageRecord>& images() const { return images_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }
  const std::filesystem::path& image_root() const { return image_root_; }

  bool empty() const { return images_.empty(); }

  const ImageRecord& image(std::int64_t id) const;
  std::filesystem::path image_path(const ImageRecord& image) const { return image_root_ / image.file_path; }

  /// Indices into annotations() for one image, in annotation order. The
  /// position within this list is the image-local "box index".
  const std::vector<std::size_t>& annotations_of(std::int64_t image_id) const;

  const std::string& category_name(int category_id) const;
  std::optional<int> category_id(std::string_view name) const;

  /// Categories other than the "ood" sentinel, in registry order.
  std::vector<Category> foreground_categories() const;

  bool has_ood_annotations() const;

  /// Throws ValidationError unless every annotation has is_ood = false.
  void require_in_distribution() const;

private:
  std::vector<Category> categories_;
  std::vector<ImageRecord> images_;
  std::vector<Annotation> annotations_;
  std::filesystem::path image_root_;

  std::unordered_map<std::int64_t, std::size_t> image_index_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> by_image_;
  std::unordered_map<int, std::size_t> category_index_;
};

bool same_contents(const DetectionDataset& a, const DetectionDataset& b);

/// Reads a COCO-style annotation file. Image pixels are not touched. The
/// image root defaults to the directory holding the file.
DetectionDataset load_dataset(const std::filesystem::path& path,
                              std::optional<std::filesystem::path> image_root = std::nullopt);

void save_dataset(const DetectionDataset& dataset, const std::filesystem::path& path);

/// Keeps only images without any annotation whose category name is in
/// `in_dist_category_names`.
DetectionDataset filter_ood_test(const DetectionDataset& ood, const std::set<std::string>& in_dist_category_names);

/// Merges two datasets over a shared registry (matched by category name).
/// Image ids of `extra` are offset past the largest id of `base`, and
/// `extra`'s image paths are rebased so both resolve from `base`'s root.
DetectionDataset merge_datasets(const DetectionDataset& base, const DetectionDataset& extra);

/// Seeded uniform draws of image ids with replacement.
class ImageSampler
{
public:
  ImageSampler(const DetectionDataset& dataset, std::uint64_t seed);

  /// Returns the position in dataset.images() of the next draw.
  std::size_t next_index();

private:
  std::size_t count_;
  std::mt19937_64 rng_;
  std::uniform_int_distribution<std::size_t> dist_;
};

std::vector<std::int64_t> sample_with_repetition(const DetectionDataset& dataset, std::size_t n, std::uint64_t seed);

/// PASCAL VOC class names in their conventional order.
const std::vector<std::string>& voc_class_names();

/// Converts VOC XML annotations into a dataset. Each split is
/// "<year dir>/<image set>", e.g. "VOC2007/trainval"; image paths are made
/// relative to `voc_root`.
DetectionDataset convert_voc(const std::filesystem::path& voc_root, const std::vector<std::string>& splits);

// ---------------------------------------------------------------------------
// Synthesis provenance

enum class Strategy { generic, distance };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

/// Provenance of one replaced object.
struct ObjectProvenance
{
  std::size_t box_index = 0;
  int category_id = 0;
  std::string class_name;
  std::optional<int> template_index;
  std::optional<std::string> prompt_text;
  std::optional<double> sigma;
  std::optional<std::uint64_t> noise_seed;
  std::uint64_t generator_seed = 0;

  friend bool operator==(const ObjectProvenance&, const ObjectProvenance&) = default;
};

struct ManifestEntry
{
  std::int64_t source_image_id = 0;
  std::int64_t output_image_id = 0;
  std::vector<std::size_t> replaced_boxes;
  Strategy strategy = Strategy::generic;
  std::vector<ObjectProvenance> objects;
  std::string generator_id;
  std::uint64_t seed = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SynthesisManifest
{
  std::vector<ManifestEntry> entries;

  /// Each output image id occurs once and every entry replaced ≥ 1 box.
  void validate() const;

  friend bool operator==(const SynthesisManifest&, const SynthesisManifest&) = default;
};

void write_manifest(const SynthesisManifest& manifest, const std::filesystem::path& path);
SynthesisManifest read_manifest(const std::filesystem::path& path);

} // namespace dreambox
