#include "dreambox/shapes.hpp"

#include "dreambox/error.hpp"
#include "dreambox/hashing.hpp"
#include "dreambox/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace dreambox {

namespace {

enum class Shape { circle, square, triangle, cross };

struct Rgb
{
  int r, g, b;
};

bool inside(Shape shape, double u, double v)
{
  // u, v in [0, 1) relative to the bounding box.
  switch (shape) {
  case Shape::circle:
    return (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25;
  case Shape::square:
    return true;
  case Shape::triangle:
    return std::abs(u - 0.5) <= 0.5 * v;
  case Shape::cross:
    return std::abs(u - 0.5) <= 1.0 / 6 || std::abs(v - 0.5) <= 1.0 / 6;
  }
  return false;
}

Rgb random_color(std::mt19937_64& rng)
{
  std::uniform_int_distribution<int> d(40, 230);
  return {d(rng), d(rng), d(rng)};
}

// `checker` > 0 fills with a two-tone checkerboard of that cell size.
void draw(RgbImage& img, Shape shape, const BoundingBox& box, Rgb color, std::mt19937_64& rng, int checker = 0,
          Rgb second = {})
{
  std::uniform_int_distribution<int> jitter(-10, 10);
  for (int y = static_cast<int>(box.y); y < static_cast<int>(box.y + box.h); ++y)
    for (int x = static_cast<int>(box.x); x < static_cast<int>(box.x + box.w); ++x) {
      const double u = (x - box.x + 0.5) / box.w, v = (y - box.y + 0.5) / box.h;
      if (!inside(shape, u, v))
        continue;
      const Rgb& c = checker > 0 && ((x / checker + y / checker) % 2) ? second : color;
      std::uint8_t* px = img.at(x, y);
      px[0] = static_cast<std::uint8_t>(std::clamp(c.r + jitter(rng), 0, 255));
      px[1] = static_cast<std::uint8_t>(std::clamp(c.g + jitter(rng), 0, 255));
      px[2] = static_cast<std::uint8_t>(std::clamp(c.b + jitter(rng), 0, 255));
    }
}

RgbImage background(int size, std::mt19937_64& rng)
{
  std::uniform_int_distribution<int> base(60, 190), noise(-12, 12);
  std::uniform_real_distribution<double> slope(-0.6, 0.6);
  const int b = base(rng);
  const double sx = slope(rng), sy = slope(rng);
  RgbImage img;
  img.width = img.height = size;
  img.pixels.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int level = b + static_cast<int>(sx * (x - size / 2) + sy * (y - size / 2));
      std::uint8_t* px = img.at(x, y);
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<std::uint8_t>(std::clamp(level + noise(rng), 0, 255));
    }
  return img;
}

BoundingBox place(int size, int min_side, int max_side, std::mt19937_64& rng)
{
  std::uniform_int_distribution<int> side(min_side, max_side);
  const int w = side(rng), h = side(rng);
  std::uniform_int_distribution<int> xd(0, size - w), yd(0, size - h);
  return {double(xd(rng)), double(yd(rng)), double(w), double(h), 0};
}

// Writes one split of `count` images.
DetectionDataset make_split(const std::filesystem::path& root, std::string_view split, std::size_t count,
                            const ShapesOptions& opt, std::uint64_t seed, bool ood_split)
{
  const std::vector<Category> categories = ood_split
                                             ? std::vector<Category>{{1, "circle"}, {2, "square"}, {3, "triangle"}, {4, "cross"}}
                                             : std::vector<Category>{{1, "circle"}, {2, "square"}};
  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5), small_object(0.4), id_intruder(0.15);

  for (std::size_t i = 0; i < count; ++i) {
    RgbImage img = background(opt.size, rng);
    const std::int64_t image_id = static_cast<std::int64_t>(i) + 1;
    auto add = [&](Shape s, const BoundingBox& where) {
      BoundingBox b = where;
      b.category_id = static_cast<int>(s) + 1;
      const Rgb color = random_color(rng);
      if (s == Shape::triangle || s == Shape::cross) {
        std::uniform_int_distribution<int> cell(2, 5);
        const int checker = cell(rng);
        draw(img, s, b, color, rng, checker, random_color(rng));
      } else {
        draw(img, s, b, color, rng);
      }
      annotations.push_back({static_cast<std::int64_t>(annotations.size()) + 1, image_id, b, false});
    };

    const int big_min = static_cast<int>(std::ceil(std::sqrt(kEligibleAreaThreshold))) + 2;
    const int big_max = std::min(opt.size - 8, big_min + 10);
    const Shape big = ood_split ? (coin(rng) ? Shape::triangle : Shape::cross) : (coin(rng) ? Shape::circle : Shape::square);
    add(big, place(opt.size, big_min, big_max, rng));
    if (small_object(rng)) {
      Shape s = ood_split ? (coin(rng) ? Shape::triangle : Shape::cross) : (coin(rng) ? Shape::circle : Shape::square);
      if (ood_split && id_intruder(rng))
        s = coin(rng) ? Shape::circle : Shape::square;
      add(s, place(opt.size, 10, 18, rng));
    }

    char name[64];
    std::snprintf(name, sizeof name, "images/%s_%05zu.png", std::string(split).c_str(), i + 1);
    write_png(img, root / name);
    images.push_back({image_id, name, opt.size, opt.size});
  }
  return DetectionDataset(categories, std::move(images), std::move(annotations), root);
}

} // namespace

ShapesFixture write_shapes_fixture(const std::filesystem::path& out_dir, const ShapesOptions& options)
{
  if (options.size < 56)
    throw ConfigError("shapes fixture images must be at least 56 pixels wide to hold an eligible object");
  ShapesFixture f{out_dir / kShapesTrainFile, out_dir / kShapesTestFile, out_dir / kShapesOodTestFile};
  save_dataset(make_split(out_dir, "train", options.train_images, options, derive_seed(options.seed, {1}), false),
               f.train);
  save_dataset(make_split(out_dir, "test", options.test_images, options, derive_seed(options.seed, {2}), false),
               f.test);
  save_dataset(make_split(out_dir, "ood", options.ood_test_images, options, derive_seed(options.seed, {3}), true),
               f.ood_test);
  return f;
}

} // namespace dreambox
