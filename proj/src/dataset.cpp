#include "dreambox/dataset.hpp"

#include "dreambox/error.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace dreambox {

using nlohmann::json;

namespace {

template <typename Ids>
std::string join_ids(const Ids& ids)
{
  std::ostringstream os;
  bool first = true;
  for (const auto& id : ids) {
    if (!first)
      os << ", ";
    os << id;
    first = false;
  }
  return os.str();
}

std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Line number, column and the offending line for a byte offset.
std::string line_context(const std::string& text, std::size_t byte)
{
  byte = std::min(byte, text.size());
  const auto line_start = text.rfind('\n', byte == 0 ? 0 : byte - 1);
  const std::size_t begin = line_start == std::string::npos ? 0 : line_start + 1;
  const auto line_end = text.find('\n', begin);
  const std::size_t line = static_cast<std::size_t>(std::count(text.begin(), text.begin() + begin, '\n')) + 1;
  std::ostringstream os;
  os << "line " << line << ", column " << (byte - begin + 1) << ": "
     << text.substr(begin, (line_end == std::string::npos ? text.size() : line_end) - begin);
  return os.str();
}

} // namespace

double box_area(const BoundingBox& box)
{
  return box.w * box.h;
}

bool synthesis_eligible(const BoundingBox& box)
{
  return box_area(box) > kEligibleAreaThreshold;
}

bool box_within_image(const BoundingBox& box, int width, int height)
{
  return box.w > 0 && box.h > 0 && box.x >= 0 && box.y >= 0 && box.x + box.w <= width && box.y + box.h <= height;
}

// ---------------------------------------------------------------------------

DetectionDataset::DetectionDataset(std::vector<Category> categories, std::vector<ImageRecord> images,
                                   std::vector<Annotation> annotations, std::filesystem::path image_root)
  : categories_(std::move(categories)), images_(std::move(images)), annotations_(std::move(annotations)),
    image_root_(std::move(image_root))
{
  std::set<int> dup_categories;
  for (std::size_t i = 0; i < categories_.size(); ++i)
    if (!category_index_.emplace(categories_[i].id, i).second)
      dup_categories.insert(categories_[i].id);
  if (!dup_categories.empty())
    throw ValidationError("duplicate category id(s): " + join_ids(dup_categories));

  std::set<std::int64_t> dup_images, bad_sizes;
  for (std::size_t i = 0; i < images_.size(); ++i) {
    if (!image_index_.emplace(images_[i].id, i).second)
      dup_images.insert(images_[i].id);
    if (images_[i].width <= 0 || images_[i].height <= 0)
      bad_sizes.insert(images_[i].id);
  }
  if (!dup_images.empty())
    throw ValidationError("duplicate image id(s): " + join_ids(dup_images));
  if (!bad_sizes.empty())
    throw ValidationError("image(s) with non-positive size: " + join_ids(bad_sizes));

  std::set<std::int64_t> missing_images, bad_boxes;
  std::set<int> missing_categories;
  for (std::size_t i = 0; i < annotations_.size(); ++i) {
    const auto& a = annotations_[i];
    auto it = image_index_.find(a.image_id);
    if (it == image_index_.end()) {
      missing_images.insert(a.image_id);
      continue;
    }
    if (!category_index_.contains(a.box.category_id))
      missing_categories.insert(a.box.category_id);
    const auto& img = images_[it->second];
    if (!box_within_image(a.box, img.width, img.height))
      bad_boxes.insert(a.id);
    by_image_[a.image_id].push_back(i);
  }
  if (!missing_images.empty())
    throw ValidationError("annotation(s) reference unknown image id(s): " + join_ids(missing_images));
  if (!missing_categories.empty())
    throw ValidationError("annotation(s) reference unknown category id(s): " + join_ids(missing_categories));
  if (!bad_boxes.empty())
    throw ValidationError("annotation(s) with empty or out-of-image boxes: " + join_ids(bad_boxes));
}

const ImageRecord& DetectionDataset::image(std::int64_t id) const
{
  auto it = image_index_.find(id);
  if (it == image_index_.end())
    throw ValidationError("unknown image id " + std::to_string(id));
  return images_[it->second];
}

const std::vector<std::size_t>& DetectionDataset::annotations_of(std::int64_t image_id) const
{
  static const std::vector<std::size_t> none;
  auto it = by_image_.find(image_id);
  return it == by_image_.end() ? none : it->second;
}

const std::string& DetectionDataset::category_name(int category_id) const
{
  auto it = category_index_.find(category_id);
  if (it == category_index_.end())
    throw ValidationError("unknown category id " + std::to_string(category_id));
  return categories_[it->second].name;
}

std::optional<int> DetectionDataset::category_id(std::string_view name) const
{
  for (const auto& c : categories_)
    if (c.name == name)
      return c.id;
  return std::nullopt;
}

std::vector<Category> DetectionDataset::foreground_categories() const
{
  std::vector<Category> out;
  for (const auto& c : categories_)
    if (c.name != kOodCategoryName)
      out.push_back(c);
  return out;
}

bool DetectionDataset::has_ood_annotations() const
{
  return std::any_of(annotations_.begin(), annotations_.end(), [](const Annotation& a) { return a.is_ood; });
}

void DetectionDataset::require_in_distribution() const
{
  std::vector<std::int64_t> ood_ids;
  for (const auto& a : annotations_)
    if (a.is_ood)
      ood_ids.push_back(a.id);
  if (!ood_ids.empty())
    throw ValidationError("in-distribution dataset carries OOD annotation(s): " + join_ids(ood_ids));
}

bool same_contents(const DetectionDataset& a, const DetectionDataset& b)
{
  auto sorted = [](auto v, auto key) {
    std::sort(v.begin(), v.end(), [&](const auto& l, const auto& r) { return key(l) < key(r); });
    return v;
  };
  auto cat_key = [](const Category& c) { return std::tie(c.id, c.name); };
  auto img_key = [](const ImageRecord& i) { return std::tie(i.id, i.file_path, i.width, i.height); };
  auto ann_key = [](const Annotation& x) {
    return std::tie(x.id, x.image_id, x.box.category_id, x.box.x, x.box.y, x.box.w, x.box.h, x.is_ood);
  };
  return sorted(a.categories(), cat_key) == sorted(b.categories(), cat_key) &&
         sorted(a.images(), img_key) == sorted(b.images(), img_key) &&
         sorted(a.annotations(), ann_key) == sorted(b.annotations(), ann_key);
}

// ---------------------------------------------------------------------------
// COCO-style JSON

DetectionDataset load_dataset(const std::filesystem::path& path, std::optional<std::filesystem::path> image_root)
{
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON at " + line_context(text, e.byte) + " (" + e.what() + ")");
  }

  std::vector<Category> categories;
  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;
  try {
    for (const char* key : {"images", "annotations", "categories"})
      if (!doc.contains(key) || !doc[key].is_array())
        throw ParseError(path.string() + ": missing array \"" + key + "\"");

    for (const auto& c : doc["categories"])
      categories.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
    for (const auto& im : doc["images"])
      images.push_back({im.at("id").get<std::int64_t>(), im.at("file_name").get<std::string>(),
                        im.at("width").get<int>(), im.at("height").get<int>()});
    std::int64_t next_id = 1;
    for (const auto& a : doc["annotations"]) {
      const auto& bbox = a.at("bbox");
      if (!bbox.is_array() || bbox.size() != 4)
        throw ParseError(path.string() + ": annotation bbox must be [x, y, w, h]");
      Annotation ann;
      ann.id = a.contains("id") ? a["id"].get<std::int64_t>() : next_id;
      next_id = std::max(next_id, ann.id) + 1;
      ann.image_id = a.at("image_id").get<std::int64_t>();
      ann.box = {bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(), bbox[3].get<double>(),
                 a.at("category_id").get<int>()};
      ann.is_ood = a.value("is_ood", false);
      annotations.push_back(ann);
    }
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  std::filesystem::path root = image_root ? *image_root : path.parent_path();
  return DetectionDataset(std::move(categories), std::move(images), std::move(annotations), std::move(root));
}

void save_dataset(const DetectionDataset& dataset, const std::filesystem::path& path)
{
  json doc;
  doc["images"] = json::array();
  for (const auto& im : dataset.images())
    doc["images"].push_back({{"id", im.id}, {"file_name", im.file_path}, {"width", im.width}, {"height", im.height}});
  doc["annotations"] = json::array();
  for (const auto& a : dataset.annotations()) {
    json j = {{"id", a.id},
              {"image_id", a.image_id},
              {"category_id", a.box.category_id},
              {"bbox", {a.box.x, a.box.y, a.box.w, a.box.h}},
              {"area", box_area(a.box)},
              {"iscrowd", 0}};
    if (a.is_ood)
      j["is_ood"] = true;
    doc["annotations"].push_back(std::move(j));
  }
  doc["categories"] = json::array();
  for (const auto& c : dataset.categories())
    doc["categories"].push_back({{"id", c.id}, {"name", c.name}});

  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw Error("dataset", "io_error", "cannot write " + path.string());
  out << doc.dump(1) << '\n';
}

DetectionDataset filter_ood_test(const DetectionDataset& ood, const std::set<std::string>& in_dist_category_names)
{
  std::set<std::int64_t> rejected;
  for (const auto& a : ood.annotations())
    if (in_dist_category_names.contains(ood.category_name(a.box.category_id)))
      rejected.insert(a.image_id);

  std::vector<ImageRecord> images;
  for (const auto& im : ood.images())
    if (!rejected.contains(im.id))
      images.push_back(im);
  std::vector<Annotation> annotations;
  for (const auto& a : ood.annotations())
    if (!rejected.contains(a.image_id))
      annotations.push_back(a);
  return DetectionDataset(ood.categories(), std::move(images), std::move(annotations), ood.image_root());
}

DetectionDataset merge_datasets(const DetectionDataset& base, const DetectionDataset& extra)
{
  std::vector<Category> categories = base.categories();
  std::map<int, int> remap;
  int next_cat = 0;
  for (const auto& c : categories)
    next_cat = std::max(next_cat, c.id);
  for (const auto& c : extra.categories()) {
    if (auto id = base.category_id(c.name)) {
      remap[c.id] = *id;
    } else {
      categories.push_back({++next_cat, c.name});
      remap[c.id] = next_cat;
    }
  }

  std::int64_t image_offset = 0, ann_offset = 0;
  for (const auto& im : base.images())
    image_offset = std::max(image_offset, im.id);
  for (const auto& a : base.annotations())
    ann_offset = std::max(ann_offset, a.id);

  const bool same_root = base.image_root() == extra.image_root();
  std::vector<ImageRecord> images = base.images();
  for (auto im : extra.images()) {
    im.id += image_offset;
    if (!same_root)
      im.file_path = std::filesystem::absolute(extra.image_path(im)).string();
    images.push_back(std::move(im));
  }
  std::vector<Annotation> annotations = base.annotations();
  for (auto a : extra.annotations()) {
    a.id += ann_offset;
    a.image_id += image_offset;
    a.box.category_id = remap.at(a.box.category_id);
    annotations.push_back(a);
  }
  return DetectionDataset(std::move(categories), std::move(images), std::move(annotations), base.image_root());
}

// ---------------------------------------------------------------------------

ImageSampler::ImageSampler(const DetectionDataset& dataset, std::uint64_t seed)
  : count_(dataset.images().size()), rng_(seed), dist_(0, count_ == 0 ? 0 : count_ - 1)
{
}

std::size_t ImageSampler::next_index()
{
  if (count_ == 0)
    throw ValidationError("cannot sample from an empty dataset");
  return dist_(rng_);
}

std::vector<std::int64_t> sample_with_repetition(const DetectionDataset& dataset, std::size_t n, std::uint64_t seed)
{
  std::vector<std::int64_t> ids;
  if (n == 0)
    return ids;
  if (dataset.empty())
    throw ValidationError("cannot sample " + std::to_string(n) + " images from an empty dataset");
  ImageSampler sampler(dataset, seed);
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    ids.push_back(dataset.images()[sampler.next_index()].id);
  return ids;
}

// ---------------------------------------------------------------------------
// PASCAL VOC

const std::vector<std::string>& voc_class_names()
{
  static const std::vector<std::string> names = {
    "aeroplane", "bicycle", "bird",  "boat",        "bottle", "bus",   "car",   "cat",   "chair", "cow",
    "diningtable", "dog",   "horse", "motorbike", "person", "pottedplant", "sheep", "sofa", "train", "tvmonitor"};
  return names;
}

DetectionDataset convert_voc(const std::filesystem::path& voc_root, const std::vector<std::string>& splits)
{
  namespace pt = boost::property_tree;
  const auto& names = voc_class_names();
  std::vector<Category> categories;
  for (std::size_t i = 0; i < names.size(); ++i)
    categories.push_back({static_cast<int>(i + 1), names[i]});

  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;
  std::int64_t next_image = 1, next_ann = 1;
  for (const auto& split : splits) {
    const auto slash = split.find('/');
    if (slash == std::string::npos)
      throw ConfigError("VOC split must look like VOC2007/trainval, got '" + split + "'");
    const std::filesystem::path year_dir = voc_root / split.substr(0, slash);
    const auto list_path = year_dir / "ImageSets" / "Main" / (split.substr(slash + 1) + ".txt");
    std::ifstream list(list_path);
    if (!list)
      throw ParseError("cannot open VOC image set " + list_path.string());

    std::string stem;
    while (list >> stem) {
      const auto xml_path = year_dir / "Annotations" / (stem + ".xml");
      pt::ptree tree;
      try {
        pt::read_xml(xml_path.string(), tree);
        const auto& root = tree.get_child("annotation");
        ImageRecord im;
        im.id = next_image++;
        im.file_path = (std::filesystem::path(split.substr(0, slash)) / "JPEGImages" /
                        root.get<std::string>("filename", stem + ".jpg"))
                         .generic_string();
        im.width = root.get<int>("size.width");
        im.height = root.get<int>("size.height");
        for (const auto& [key, obj] : root) {
          if (key != "object")
            continue;
          const auto name = obj.get<std::string>("name");
          auto it = std::find(names.begin(), names.end(), name);
          if (it == names.end())
            throw ValidationError("VOC annotation " + xml_path.string() + " has unknown class '" + name + "'");
          // VOC corners are 1-based and inclusive.
          const double xmin = obj.get<double>("bndbox.xmin"), ymin = obj.get<double>("bndbox.ymin");
          const double xmax = obj.get<double>("bndbox.xmax"), ymax = obj.get<double>("bndbox.ymax");
          Annotation a;
          a.id = next_ann++;
          a.image_id = im.id;
          a.box = {xmin - 1, ymin - 1, xmax - xmin + 1, ymax - ymin + 1, static_cast<int>(it - names.begin()) + 1};
          annotations.push_back(a);
        }
        images.push_back(std::move(im));
      } catch (const pt::ptree_error& e) {
        throw ParseError("VOC annotation " + xml_path.string() + ": " + e.what());
      }
    }
  }
  return DetectionDataset(std::move(categories), std::move(images), std::move(annotations), voc_root);
}

// ---------------------------------------------------------------------------
// Manifest

std::string_view to_string(Strategy s)
{
  return s == Strategy::generic ? "generic" : "distance";
}

Strategy parse_strategy(std::string_view s)
{
  if (s == "generic")
    return Strategy::generic;
  if (s == "distance")
    return Strategy::distance;
  throw ConfigError("unknown strategy '" + std::string(s) + "' (expected generic or distance)");
}

void SynthesisManifest::validate() const
{
  std::set<std::int64_t> seen, dup;
  for (const auto& e : entries) {
    if (!seen.insert(e.output_image_id).second)
      dup.insert(e.output_image_id);
    if (e.replaced_boxes.empty())
      throw ValidationError("manifest entry for output image " + std::to_string(e.output_image_id) +
                              " replaced no boxes",
                            "synthesize");
  }
  if (!dup.empty())
    throw ValidationError("manifest lists output image id(s) more than once: " + join_ids(dup), "synthesize");
}

namespace {

json to_json(const ManifestEntry& e)
{
  json objects = json::array();
  for (const auto& o : e.objects) {
    json j = {{"box_index", o.box_index},
              {"category_id", o.category_id},
              {"class_name", o.class_name},
              {"generator_seed", o.generator_seed}};
    if (o.template_index)
      j["template_index"] = *o.template_index;
    if (o.prompt_text)
      j["prompt"] = *o.prompt_text;
    if (o.sigma)
      j["sigma"] = *o.sigma;
    if (o.noise_seed)
      j["noise_seed"] = *o.noise_seed;
    objects.push_back(std::move(j));
  }
  return {{"source_image_id", e.source_image_id},
          {"output_image_id", e.output_image_id},
          {"replaced_boxes", e.replaced_boxes},
          {"strategy", to_string(e.strategy)},
          {"objects", std::move(objects)},
          {"generator_id", e.generator_id},
          {"seed", e.seed}};
}

ManifestEntry entry_from_json(const json& j)
{
  ManifestEntry e;
  e.source_image_id = j.at("source_image_id").get<std::int64_t>();
  e.output_image_id = j.at("output_image_id").get<std::int64_t>();
  e.replaced_boxes = j.at("replaced_boxes").get<std::vector<std::size_t>>();
  e.strategy = parse_strategy(j.at("strategy").get<std::string>());
  e.generator_id = j.at("generator_id").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& o : j.at("objects")) {
    ObjectProvenance p;
    p.box_index = o.at("box_index").get<std::size_t>();
    p.category_id = o.at("category_id").get<int>();
    p.class_name = o.at("class_name").get<std::string>();
    p.generator_seed = o.at("generator_seed").get<std::uint64_t>();
    if (o.contains("template_index"))
      p.template_index = o["template_index"].get<int>();
    if (o.contains("prompt"))
      p.prompt_text = o["prompt"].get<std::string>();
    if (o.contains("sigma"))
      p.sigma = o["sigma"].get<double>();
    if (o.contains("noise_seed"))
      p.noise_seed = o["noise_seed"].get<std::uint64_t>();
    e.objects.push_back(std::move(p));
  }
  return e;
}

} // namespace

void write_manifest(const SynthesisManifest& manifest, const std::filesystem::path& path)
{
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out)
    throw Error("synthesize", "io_error", "cannot write " + path.string());
  for (const auto& e : manifest.entries)
    out << to_json(e).dump() << '\n';
}

SynthesisManifest read_manifest(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw ParseError("cannot open manifest " + path.string());
  SynthesisManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty())
      continue;
    try {
      m.entries.push_back(entry_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

} // namespace dreambox
