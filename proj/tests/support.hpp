#pragma once

#include "dreambox/dataset.hpp"
#include "dreambox/image.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir
{
public:
  explicit TempDir(const std::string& tag)
  {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("dreambox-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
  std::filesystem::path path_;
};

inline dreambox::RgbImage random_image(int w, int h, std::mt19937_64& rng)
{
  dreambox::RgbImage img(w, h);
  std::uniform_int_distribution<int> byte(0, 255);
  for (auto& p : img.pixels)
    p = static_cast<std::uint8_t>(byte(rng));
  return img;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
  std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

} // namespace testing
