#include "dreambox/detector.hpp"
#include "dreambox/error.hpp"
#include "dreambox/shapes.hpp"
#include "dreambox/synth.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fstream>

using namespace dreambox;
using testing::TempDir;

namespace {

Crop random_crop(std::mt19937_64& rng, CropKind kind, int num_classes)
{
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Crop c;
  c.pixels = Vector<double>(crop_net::input_size);
  for (auto& x : c.pixels)
    x = u(rng);
  c.kind = kind;
  if (kind == CropKind::in_dist)
    c.class_index = std::uniform_int_distribution<int>(0, num_classes - 1)(rng);
  return c;
}

OodHead<double> random_head(std::mt19937_64& rng)
{
  std::normal_distribution<double> n(0, 0.7);
  auto h = OodHead<double>::zeros(6);
  for (auto* v : {&h.w_in, &h.b_in, &h.w_out})
    for (auto& x : *v)
      x = n(rng);
  h.b_out = n(rng);
  return h;
}

double total_loss(const DetectorParams<double>& p, const OodHead<double>& h, const std::vector<Crop>& batch,
                  const TrainConfig& config)
{
  return batch_gradient(p, h, batch, config).loss.total();
}

// Shapes fixture plus mock-generated outliers, merged into one training set.
struct TinyTraining
{
  TempDir dir{"detector"};
  DetectionDataset in_dist, combined;

  TinyTraining()
  {
    ShapesOptions o;
    o.train_images = 24;
    o.test_images = 4;
    o.ood_test_images = 4;
    const auto f = write_shapes_fixture(dir.path(), o);
    in_dist = load_dataset(f.train);
    MockGenerator gen;
    const auto synth =
      build_ood_dataset(in_dist, {8, Strategy::generic, std::nullopt, 3, 1}, gen, nullptr, dir / "synth");
    combined = merge_datasets(in_dist, synth.dataset);
  }
};

TrainConfig short_config()
{
  TrainConfig c;
  c.epochs = 3;
  c.lr_decay_epochs = {1, 2};
  c.batch_size = 8;
  c.seed = 12;
  return c;
}

} // namespace

TEST_CASE("batch gradient matches finite differences")
{
  std::mt19937_64 rng(21);
  for (auto variant : {LossVariant::focal, LossVariant::bce}) {
    TrainConfig config;
    config.loss_variant = variant;
    config.ood_loss_weight = 2.0;
    const int K = 3;
    auto params = DetectorParams<double>::init(K, 4);
    const auto head = random_head(rng);
    std::vector<Crop> batch;
    for (auto kind : {CropKind::in_dist, CropKind::in_dist, CropKind::ood, CropKind::background, CropKind::ood})
      batch.push_back(random_crop(rng, kind, K));
    const auto g = batch_gradient(params, head, batch, config);

    // Probe a handful of coordinates in every tensor.
    auto probe = [&](auto& tensor, const auto& grad) {
      std::uniform_int_distribution<Eigen::Index> pick(0, tensor.size() - 1);
      for (int t = 0; t < 6; ++t) {
        const auto i = pick(rng);
        const double saved = tensor.data()[i];
        const double h = 1e-5;
        tensor.data()[i] = saved + h;
        const double up = total_loss(params, head, batch, config);
        tensor.data()[i] = saved - h;
        const double down = total_loss(params, head, batch, config);
        tensor.data()[i] = saved;
        const double fd = (up - down) / (2 * h);
        const double an = grad.data()[i];
        CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
      }
    };
    probe(params.conv_w, g.detector.conv_w);
    probe(params.fc_w, g.detector.fc_w);
    probe(params.fc_b, g.detector.fc_b);
    probe(params.cls_w, g.detector.cls_w);
    probe(params.cls_b, g.detector.cls_b);
    probe(params.obj_w, g.detector.obj_w);

    auto h2 = head;
    const double eps = 1e-5;
    h2.b_out += eps;
    const double up = total_loss(params, h2, batch, config);
    h2.b_out -= 2 * eps;
    const double down = total_loss(params, h2, batch, config);
    CHECK(std::abs((up - down) / (2 * eps) - g.head.b_out) < 1e-6);
    for (Eigen::Index i = 0; i < head.hidden(); ++i) {
      h2 = head;
      h2.w_in[i] += eps;
      const double a = total_loss(params, h2, batch, config);
      h2.w_in[i] -= 2 * eps;
      const double b = total_loss(params, h2, batch, config);
      CHECK(std::abs((a - b) / (2 * eps) - g.head.w_in[i]) < 1e-6);
    }
  }
}

TEST_CASE("loss terms can be switched off")
{
  std::mt19937_64 rng(2);
  const auto params = DetectorParams<double>::init(2, 1);
  const auto head = random_head(rng);
  std::vector<Crop> batch{random_crop(rng, CropKind::in_dist, 2), random_crop(rng, CropKind::ood, 2)};
  const auto all = batch_gradient(params, head, batch, TrainConfig{});
  const auto none = batch_gradient(params, head, batch, TrainConfig{}, {false, false, false});
  CHECK(all.loss.total() > 0);
  CHECK(none.loss.total() == 0);
  CHECK(none.detector.squared_norm() == 0);
}

TEST_CASE("classification gradient ignores OOD crops bitwise")
{
  std::mt19937_64 rng(7);
  const LossTerms cls_only{true, false, false};
  for (int trial = 0; trial < 25; ++trial) {
    const int K = 2 + trial % 4;
    const auto params = DetectorParams<double>::init(K, static_cast<std::uint64_t>(trial));
    const auto head = random_head(rng);
    std::vector<Crop> batch;
    const int n = 1 + trial % 6;
    for (int i = 0; i < n; ++i)
      batch.push_back(random_crop(rng, CropKind::in_dist, K));
    auto with_ood = batch;
    const int extra = 1 + trial % 3;
    for (int i = 0; i < extra; ++i) {
      const auto pos = std::uniform_int_distribution<std::size_t>(0, with_ood.size())(rng);
      with_ood.insert(with_ood.begin() + static_cast<std::ptrdiff_t>(pos), random_crop(rng, CropKind::ood, K));
    }
    const auto a = batch_gradient(params, head, batch, TrainConfig{}, cls_only);
    const auto b = batch_gradient(params, head, with_ood, TrainConfig{}, cls_only);
    CHECK(a.detector.cls_w == b.detector.cls_w);
    CHECK(a.detector.cls_b == b.detector.cls_b);
    CHECK(a.loss.classification == b.loss.classification);
  }
}

TEST_CASE("learning-rate schedule")
{
  TrainConfig c;
  for (int e = 1; e <= 12; ++e)
    CHECK(c.learning_rate_at(e) == doctest::Approx(0.02).epsilon(1e-12));
  for (int e = 13; e <= 16; ++e)
    CHECK(c.learning_rate_at(e) == doctest::Approx(0.002).epsilon(1e-12));
  for (int e = 17; e <= 18; ++e)
    CHECK(c.learning_rate_at(e) == doctest::Approx(0.0002).epsilon(1e-12));
}

TEST_CASE("train config validation")
{
  TrainConfig c;
  c.validate();
  c.lr_decay_epochs = {18};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.grad_clip_norm = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training")
{
  TinyTraining data;
  const auto config = short_config();

  SUBCASE("the OOD loss needs OOD instances")
  {
    try {
      train_toy_detector(data.in_dist, config);
      FAIL("expected missing_ood");
    } catch (const TrainingError& e) {
      CHECK(e.code() == "missing_ood");
    }
    const auto baseline = train_toy_detector(data.in_dist, config, false);
    CHECK(baseline.log.size() == 3);
  }
  SUBCASE("deterministic for a fixed seed")
  {
    const auto a = train_toy_detector(data.combined, config);
    const auto b = train_toy_detector(data.combined, config);
    CHECK(a.detector.cls_w == b.detector.cls_w);
    CHECK(a.head.w_out == b.head.w_out);
    CHECK(a.log.back().total == b.log.back().total);
    auto other = config;
    other.seed = 13;
    CHECK(train_toy_detector(data.combined, other).detector.cls_w != a.detector.cls_w);
  }
  SUBCASE("log follows the schedule and the baseline leaves the head alone")
  {
    auto c = config;
    c.momentum = 0.9;
    c.grad_clip_norm = 3.0;
    const auto m = train_toy_detector(data.combined, c);
    REQUIRE(m.log.size() == 3);
    CHECK(m.log[0].lr == doctest::Approx(0.02));
    CHECK(m.log[1].lr == doctest::Approx(0.002));
    CHECK(m.log[2].lr == doctest::Approx(0.0002));
    CHECK(m.log[2].step == 3 * ((data.combined.images().size() + 7) / 8));
    CHECK(m.log[0].ood_loss > 0);
    CHECK(m.class_names == std::vector<std::string>{"circle", "square"});

    const auto base = train_toy_detector(data.combined, c, false);
    CHECK(base.log[0].ood_loss == 0);
    const auto again = train_toy_detector(data.combined, c, false);
    CHECK(base.head.w_in == again.head.w_in);
  }
  SUBCASE("training log CSV")
  {
    const auto m = train_toy_detector(data.combined, config);
    write_training_log(m.log, data.dir / "log.csv");
    std::ifstream in(data.dir / "log.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "epoch,step,lr,cls_loss,objness_loss,ood_loss,total");
    int rows = 0;
    while (std::getline(in, line))
      ++rows;
    CHECK(rows == 3);
  }
  SUBCASE("checkpoint round trip")
  {
    auto c = config;
    c.momentum = 0.5;
    const auto m = train_toy_detector(data.combined, c);
    save_checkpoint(m, data.dir / "ckpt.json");
    const auto back = load_checkpoint(data.dir / "ckpt.json");
    CHECK(back.class_names == m.class_names);
    CHECK(back.detector.conv_w == m.detector.conv_w);
    CHECK(back.detector.fc_w == m.detector.fc_w);
    CHECK(back.detector.obj_b == m.detector.obj_b);
    CHECK(back.head.w_in == m.head.w_in);
    CHECK(back.head.b_out == m.head.b_out);
    CHECK(back.config.momentum == 0.5);
    CHECK(back.config.lr_decay_epochs == c.lr_decay_epochs);
    CHECK(back.config.seed == c.seed);
    CHECK_THROWS_AS(load_checkpoint(data.dir / "missing.json"), EvaluationError);
    testing::write_text(data.dir / "bad.json", "{\"format\": \"other\"}");
    CHECK_THROWS_AS(load_checkpoint(data.dir / "bad.json"), EvaluationError);
  }
}

TEST_CASE("representations")
{
  TinyTraining data;
  const auto params = DetectorParams<double>::init(2, 3);
  const auto reps = extract_representations(params, data.combined);
  CHECK(reps.size() == data.combined.annotations().size());
  std::size_t ood = 0;
  for (const auto& r : reps) {
    CHECK(r.feature.size() == crop_net::hidden);
    CHECK(r.logits.size() == 2);
    ood += *r.is_ood;
  }
  CHECK(ood > 0);

  std::filesystem::remove(data.in_dist.image_path(data.in_dist.images()[0]));
  try {
    extract_representations(params, data.in_dist);
    FAIL("expected missing images");
  } catch (const Error& e) {
    CHECK(e.code() == "missing_images");
    CHECK(std::string(e.what()).find(data.in_dist.images()[0].file_path) != std::string::npos);
  }
}
