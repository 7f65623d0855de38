#pragma once

#include "dreambox/dataset.hpp"

#include <cstdint>
#include <filesystem>

namespace dreambox {

// Procedural detection fixture: 64x64 images with one large object (always
// synthesis-eligible) and sometimes a small one. In-distribution classes are
// flat-coloured "circle" and "square"; the OOD test split uses checkerboard
// "triangle" and "cross" objects, and a few of its images also hold an
// in-distribution object so the OOD-test filter has something to remove.
struct ShapesOptions
{
  std::size_t train_images = 500;
  std::size_t test_images = 300;
  std::size_t ood_test_images = 300;
  int size = 64;
  std::uint64_t seed = 20240917;
};

struct ShapesFixture
{
  std::filesystem::path train, test, ood_test; ///< annotation files
};

inline constexpr std::string_view kShapesTrainFile = "train.json";
inline constexpr std::string_view kShapesTestFile = "test.json";
inline constexpr std::string_view kShapesOodTestFile = "ood_test.json";

ShapesFixture write_shapes_fixture(const std::filesystem::path& out_dir, const ShapesOptions& options = {});

} // namespace dreambox
