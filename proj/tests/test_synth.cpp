#include "dreambox/error.hpp"
#include "dreambox/hashing.hpp"
#include "dreambox/synth.hpp"

#include "support.hpp"
#include "test_server.hpp"

#include <doctest.h>

#include <atomic>

using namespace dreambox;
using testing::TempDir;

namespace {

PromptSpec text_prompt(const BoundingBox&, std::size_t i)
{
  return render_generic_prompt(static_cast<int>(i % 20) + 1, "dog");
}

// Records each request and fills the mask with a constant.
class RecordingGenerator : public Generator
{
public:
  std::string id() const override { return "recording"; }
  int max_in_flight() const override { return 1; }
  GeneratorResult generate(const GeneratorRequest& r) override
  {
    r.validate();
    requests.push_back(r);
    GeneratorResult out{r.image, "recording", 0};
    for (int y = r.mask.y0; y < r.mask.y1; ++y)
      for (int x = r.mask.x0; x < r.mask.x1; ++x)
        out.image.at(x, y)[0] = static_cast<std::uint8_t>(requests.size());
    return out;
  }
  std::vector<GeneratorRequest> requests;
};

class FailingGenerator : public Generator
{
public:
  explicit FailingGenerator(int fail_after) : fail_after_(fail_after) {}
  std::string id() const override { return "failing"; }
  int max_in_flight() const override { return 1; }
  GeneratorResult generate(const GeneratorRequest& r) override
  {
    if (calls_++ >= fail_after_)
      throw TransportError("generator went away");
    return mock_generate(r);
  }

private:
  int fail_after_;
  std::atomic<int> calls_{0};
};

// Images on disk: every image gets one 60x60 box (eligible) and one 10x10 box.
DetectionDataset write_dataset(const std::filesystem::path& dir, int n_images, bool eligible = true)
{
  std::mt19937_64 rng(5);
  std::vector<ImageRecord> images;
  std::vector<Annotation> anns;
  for (int i = 1; i <= n_images; ++i) {
    const std::string name = "img" + std::to_string(i) + ".png";
    write_png(testing::random_image(96, 80, rng), dir / name);
    images.push_back({i, name, 96, 80});
    const double big = eligible ? 60 : 20;
    anns.push_back({2 * i - 1, i, {5, 5, big, big, 1 + i % 2}, false});
    anns.push_back({2 * i, i, {70, 60, 10, 10, 1}, false});
  }
  return DetectionDataset({{1, "dog"}, {2, "cat"}}, images, anns, dir);
}

} // namespace

TEST_CASE("mask_from_box rounds outward and clamps")
{
  CHECK(mask_from_box({10, 20, 30, 40, 1}, 100, 100) == MaskSpec{100, 100, 10, 20, 40, 60});
  CHECK(mask_from_box({10.5, 20.2, 30, 40, 1}, 100, 100) == MaskSpec{100, 100, 10, 20, 41, 61});
  CHECK(mask_from_box({0, 0, 100, 100, 1}, 100, 100).full_image());
  CHECK_THROWS_AS(mask_from_box({0, 0, 0, 10, 1}, 100, 100), std::invalid_argument);
  CHECK_THROWS_AS(mask_from_box({90, 0, 20, 10, 1}, 100, 100), std::invalid_argument);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 2000; ++t) {
    const double x = u(rng) * 50, y = u(rng) * 50;
    const BoundingBox b{x, y, 1 + u(rng) * (49 - x + 50) * 0.5, 1 + u(rng) * (49 - y + 50) * 0.5, 1};
    const auto m = mask_from_box(b, 100, 100);
    CHECK(m.x0 <= b.x);
    CHECK(m.y0 <= b.y);
    CHECK(m.x1 >= b.x + b.w);
    CHECK(m.y1 >= b.y + b.h);
    CHECK(m.x1 - m.x0 <= b.w + 2);
    CHECK(m.y1 - m.y0 <= b.h + 2);
  }
}

TEST_CASE("mock generator changes only the mask and is deterministic")
{
  std::mt19937_64 rng(1);
  const auto img = testing::random_image(40, 30, rng);
  GeneratorRequest req{img, mask_from_box({5, 5, 20, 10, 1}, 40, 30), render_generic_prompt(4, "cat"), 17};
  const auto a = mock_generate(req);
  CHECK(a.image == mock_generate(req).image);
  std::size_t changed = 0;
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      const bool same = std::equal(a.image.at(x, y), a.image.at(x, y) + 3, img.at(x, y));
      if (!req.mask.contains(x, y))
        CHECK(same);
      changed += !same;
    }
  CHECK(changed > 150);

  auto other = req;
  other.seed = 18;
  CHECK(mock_generate(other).image != a.image);

  auto both = req;
  both.prompt.embedding = Vector<double>::Zero(3);
  CHECK_THROWS_AS(mock_generate(both), std::invalid_argument);
}

TEST_CASE("inpaint_sequence")
{
  std::mt19937_64 rng(3);
  const auto img = testing::random_image(100, 100, rng);

  SUBCASE("no eligible boxes leaves the image alone")
  {
    RecordingGenerator g;
    const std::vector<BoundingBox> boxes{{0, 0, 10, 10, 1}, {50, 50, 40, 50, 1}};
    const auto r = inpaint_sequence(img, boxes, text_prompt, g, 1);
    CHECK(r.replaced.empty());
    CHECK(r.image == img);
    CHECK(g.requests.empty());
  }
  SUBCASE("one eligible box")
  {
    RecordingGenerator g;
    const std::vector<BoundingBox> boxes{{0, 0, 10, 10, 1}, {10, 10, 50, 50, 1}};
    const auto r = inpaint_sequence(img, boxes, text_prompt, g, 9);
    CHECK(r.replaced == std::vector<std::size_t>{1});
    REQUIRE(g.requests.size() == 1);
    CHECK(g.requests[0].seed == derive_seed(9, {1}));
    CHECK(r.generator_seeds == std::vector<std::uint64_t>{derive_seed(9, {1})});
    CHECK(*r.prompts[0].text == *text_prompt(boxes[1], 1).text);
  }
  SUBCASE("overlapping boxes are applied sequentially")
  {
    RecordingGenerator g;
    const std::vector<BoundingBox> boxes{{0, 0, 60, 60, 1}, {30, 30, 60, 60, 2}};
    const auto r = inpaint_sequence(img, boxes, text_prompt, g, 4);
    REQUIRE(g.requests.size() == 2);
    // The second request sees the first step's output.
    CHECK(g.requests[1].image.at(40, 40)[0] == 1);
    CHECK(g.requests[1].image.at(10, 10)[0] == 1);
    CHECK(r.image.at(40, 40)[0] == 2);
    CHECK(r.image.at(10, 10)[0] == 1);
    CHECK(r.image.at(95, 5)[0] == img.at(95, 5)[0]);
  }
}

TEST_CASE("build_ood_dataset")
{
  TempDir src("synth-src");
  const auto d = write_dataset(src.path(), 6);
  MockGenerator gen;

  SUBCASE("n = 0 gives an empty dataset")
  {
    TempDir out("synth-out");
    const auto r = build_ood_dataset(d, {0, Strategy::generic, std::nullopt, 1, 1}, gen, nullptr, out.path());
    CHECK(r.dataset.empty());
    CHECK(r.manifest.entries.empty());
    CHECK(std::filesystem::exists(out / std::string(kOodAnnotationFile)));
  }
  SUBCASE("generic strategy")
  {
    TempDir out("synth-out");
    const auto r = build_ood_dataset(d, {10, Strategy::generic, std::nullopt, 3, 2}, gen, nullptr, out.path());
    CHECK(r.summary.sampled == 10);
    CHECK(r.dataset.images().size() == 10);
    CHECK(r.manifest.entries.size() == 10);
    CHECK(r.summary.eligible_image_fraction == 1.0);
    for (const auto& a : r.dataset.annotations())
      CHECK(a.is_ood == synthesis_eligible(a.box));
    for (const auto& e : r.manifest.entries) {
      CHECK(e.replaced_boxes == std::vector<std::size_t>{0});
      CHECK(e.objects[0].template_index.has_value());
      CHECK(e.objects[0].prompt_text->find(e.objects[0].class_name) != std::string::npos);
    }
    const auto back = load_dataset(out / std::string(kOodAnnotationFile));
    CHECK(same_contents(back, r.dataset));
    CHECK(read_manifest(out / std::string(kManifestFile)) == r.manifest);
    for (const auto& im : back.images())
      CHECK(read_image(back.image_path(im)).width == 96);
  }
  SUBCASE("output does not depend on the worker count")
  {
    TempDir a("synth-a"), b("synth-b");
    const auto r1 = build_ood_dataset(d, {8, Strategy::generic, std::nullopt, 5, 1}, gen, nullptr, a.path());
    const auto r4 = build_ood_dataset(d, {8, Strategy::generic, std::nullopt, 5, 4}, gen, nullptr, b.path());
    CHECK(r1.manifest == r4.manifest);
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(read_image(r1.dataset.image_path(r1.dataset.images()[i])) ==
            read_image(r4.dataset.image_path(r4.dataset.images()[i])));
  }
  SUBCASE("distance strategy records sigma and seeds")
  {
    TempDir out("synth-out");
    MockEmbedder emb(32);
    const auto r = build_ood_dataset(d, {5, Strategy::distance, 2.5, 8, 2}, gen, &emb, out.path());
    for (const auto& e : r.manifest.entries) {
      CHECK(e.strategy == Strategy::distance);
      CHECK(*e.objects[0].sigma == 2.5);
      CHECK(e.objects[0].noise_seed.has_value());
      CHECK_FALSE(e.objects[0].prompt_text.has_value());
    }
    CHECK(read_manifest(out / std::string(kManifestFile)).entries[0].objects[0].sigma == 2.5);
  }
  SUBCASE("distance strategy needs sigma and an embedder")
  {
    TempDir out("synth-out");
    MockEmbedder emb(8);
    CHECK_THROWS_AS(build_ood_dataset(d, {5, Strategy::distance, std::nullopt, 8, 1}, gen, &emb, out.path()),
                    ConfigError);
    CHECK_THROWS_AS(build_ood_dataset(d, {5, Strategy::distance, 1.0, 8, 1}, gen, nullptr, out.path()),
                    ConfigError);
  }
  SUBCASE("generator failure leaves nothing behind")
  {
    TempDir out("synth-out");
    FailingGenerator failing(3);
    CHECK_THROWS_AS(build_ood_dataset(d, {6, Strategy::generic, std::nullopt, 2, 1}, failing, nullptr, out.path()),
                    TransportError);
    CHECK(std::filesystem::is_empty(out.path()));
  }
}

TEST_CASE("retry cap when no image is eligible")
{
  TempDir src("synth-none");
  const auto d = write_dataset(src.path(), 3, false);
  MockGenerator gen;
  TempDir out("synth-out");
  try {
    build_ood_dataset(d, {2, Strategy::generic, std::nullopt, 1, 1}, gen, nullptr, out.path());
    FAIL("expected the retry cap to trigger");
  } catch (const SynthesisError& e) {
    CHECK(e.code() == "retry_cap_exhausted");
    CHECK(std::string(e.what()).find("0.0000") != std::string::npos);
  }
}

TEST_CASE("HTTP generator round trip")
{
  testing::JsonServer server([](const nlohmann::json& body, int&) {
    const auto req = generator_request_from_json(body);
    const auto res = mock_generate(req);
    return nlohmann::json{{"image_png_b64", base64_encode(std::span<const std::uint8_t>(encode_png(res.image)))},
                          {"generator_id", "served-mock"}};
  });
  std::mt19937_64 rng(8);
  const GeneratorRequest req{testing::random_image(32, 32, rng), mask_from_box({4, 4, 20, 20, 1}, 32, 32),
                             render_generic_prompt(2, "cat"), 5};
  HttpGenerator g({server.url(), std::chrono::milliseconds(5000), 0});
  const auto res = g.generate(req);
  CHECK(res.generator_id == "served-mock");
  CHECK(res.image == mock_generate(req).image);

  testing::JsonServer resizing([](const nlohmann::json&, int&) {
    return nlohmann::json{{"image_png_b64", base64_encode(std::span<const std::uint8_t>(encode_png(RgbImage(8, 8))))},
                          {"generator_id", "bad"}};
  });
  HttpGenerator bad({resizing.url(), std::chrono::milliseconds(5000), 0});
  CHECK_THROWS_AS(bad.generate(req), ContractError);

  HttpGenerator dead({testing::dead_url(), std::chrono::milliseconds(500), 1});
  CHECK_THROWS_AS(dead.generate(req), TransportError);
}
