#include "dreambox/synth.hpp"

#include "dreambox/error.hpp"
#include "dreambox/hashing.hpp"
#include "dreambox/http.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numbers>
#include <thread>

namespace dreambox {

using nlohmann::json;

MaskSpec mask_from_box(const BoundingBox& box, int image_width, int image_height)
{
  if (!(box.w > 0) || !(box.h > 0))
    throw std::invalid_argument("mask_from_box: degenerate box");
  if (!box_within_image(box, image_width, image_height))
    throw std::invalid_argument("mask_from_box: box outside the " + std::to_string(image_width) + "x" +
                                std::to_string(image_height) + " image");
  MaskSpec m;
  m.image_width = image_width;
  m.image_height = image_height;
  m.x0 = std::clamp(static_cast<int>(std::floor(box.x)), 0, image_width);
  m.y0 = std::clamp(static_cast<int>(std::floor(box.y)), 0, image_height);
  m.x1 = std::clamp(static_cast<int>(std::ceil(box.x + box.w)), 0, image_width);
  m.y1 = std::clamp(static_cast<int>(std::ceil(box.y + box.h)), 0, image_height);
  return m;
}

void GeneratorRequest::validate() const
{
  if (image.width != mask.image_width || image.height != mask.image_height)
    throw std::invalid_argument("generator request: image and mask dimensions differ");
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw std::invalid_argument("generator request: pixel buffer size mismatch");
  if (!(0 <= mask.x0 && mask.x0 < mask.x1 && mask.x1 <= mask.image_width && 0 <= mask.y0 && mask.y0 < mask.y1 &&
        mask.y1 <= mask.image_height))
    throw std::invalid_argument("generator request: mask region out of bounds");
  if (prompt.text.has_value() == prompt.embedding.has_value())
    throw std::invalid_argument("generator request: exactly one of prompt text or embedding must be set");
}

GeneratorResult mock_generate(const GeneratorRequest& request)
{
  request.validate();
  const auto& m = request.mask;
  char region[96];
  std::snprintf(region, sizeof region, "|%llu|%d,%d,%d,%d", static_cast<unsigned long long>(request.seed), m.x0,
                m.y0, m.x1, m.y1);
  const std::uint64_t key = sha256_u64(request.prompt.digest() + region);

  // Oriented stripes between two saturated colours plus per-pixel hash noise.
  const double angle = static_cast<double>(mix64(key) % 3600) / 3600.0 * std::numbers::pi;
  const double freq = 0.6 + static_cast<double>(mix64(key + 1) % 1000) / 1000.0 * 0.9;
  const double phase = static_cast<double>(mix64(key + 2) % 1000) / 1000.0 * 2 * std::numbers::pi;
  std::uint8_t colors[2][3];
  for (int c = 0; c < 2; ++c)
    for (int ch = 0; ch < 3; ++ch)
      colors[c][ch] = static_cast<std::uint8_t>(mix64(key + 10 + c * 3 + ch) % 256);
  const double ca = std::cos(angle), sa = std::sin(angle);

  GeneratorResult result;
  result.image = request.image;
  result.generator_id = "mock-generator-v1";
  for (int y = m.y0; y < m.y1; ++y) {
    for (int x = m.x0; x < m.x1; ++x) {
      const double s = std::sin(freq * (ca * x + sa * y) + phase);
      const auto& base = colors[s > 0 ? 0 : 1];
      const std::uint64_t noise = mix64(key ^ (static_cast<std::uint64_t>(y) << 32 | static_cast<std::uint32_t>(x)));
      std::uint8_t* px = result.image.at(x, y);
      for (int ch = 0; ch < 3; ++ch) {
        const int jitter = static_cast<int>((noise >> (ch * 8)) & 0x3f) - 32;
        px[ch] = static_cast<std::uint8_t>(std::clamp(base[ch] + jitter, 0, 255));
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------

json generator_request_to_json(const GeneratorRequest& request)
{
  json body;
  body["image_png_b64"] = base64_encode(std::span<const std::uint8_t>(encode_png(request.image)));
  body["mask"] = {{"x0", request.mask.x0}, {"y0", request.mask.y0}, {"x1", request.mask.x1}, {"y1", request.mask.y1}};
  body["prompt"] = request.prompt.text ? json(*request.prompt.text) : json(nullptr);
  if (request.prompt.embedding) {
    const auto& v = *request.prompt.embedding;
    body["embedding"] = std::vector<double>(v.data(), v.data() + v.size());
  } else {
    body["embedding"] = nullptr;
  }
  body["seed"] = request.seed;
  return body;
}

GeneratorRequest generator_request_from_json(const json& body)
{
  GeneratorRequest r;
  const std::string png = base64_decode(body.at("image_png_b64").get<std::string>());
  r.image = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(png.data()), png.size()));
  const auto& m = body.at("mask");
  r.mask = {r.image.width, r.image.height, m.at("x0").get<int>(), m.at("y0").get<int>(), m.at("x1").get<int>(),
            m.at("y1").get<int>()};
  if (!body.at("prompt").is_null()) {
    r.prompt.kind = PromptKind::generic_text;
    r.prompt.text = body["prompt"].get<std::string>();
  }
  if (!body.at("embedding").is_null()) {
    const auto v = body["embedding"].get<std::vector<double>>();
    r.prompt.kind = PromptKind::perturbed_embedding;
    r.prompt.embedding = Eigen::Map<const Vector<double>>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  r.seed = body.at("seed").get<std::uint64_t>();
  r.validate();
  return r;
}

HttpGenerator::HttpGenerator(HttpAdapterOptions options, int max_in_flight)
  : options_(std::move(options)), max_in_flight_(std::max(1, max_in_flight))
{
  parse_endpoint(options_.endpoint);
}

std::string HttpGenerator::id() const
{
  return "http-generator:" + options_.endpoint;
}

GeneratorResult HttpGenerator::generate(const GeneratorRequest& request)
{
  request.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto reply = post_json(parse_endpoint(options_.endpoint), generator_request_to_json(request), options_.timeout,
                               options_.retries, "synthesize");
  GeneratorResult result;
  try {
    const std::string png = base64_decode(reply.at("image_png_b64").get<std::string>());
    result.image = decode_png(std::span(reinterpret_cast<const std::uint8_t*>(png.data()), png.size()));
    result.generator_id = reply.at("generator_id").get<std::string>();
  } catch (const json::exception& e) {
    throw ContractError(std::string("malformed generator reply: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ContractError(std::string("malformed generator reply: ") + e.what());
  }
  if (result.image.width != request.image.width || result.image.height != request.image.height)
    throw ContractError("generator changed the image size from " + std::to_string(request.image.width) + "x" +
                        std::to_string(request.image.height) + " to " + std::to_string(result.image.width) + "x" +
                        std::to_string(result.image.height));
  result.latency_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------

InpaintResult inpaint_sequence(const RgbImage& image, std::span<const BoundingBox> boxes,
                               const PromptFactory& prompt_for, Generator& generator, std::uint64_t seed)
{
  InpaintResult r;
  r.image = image;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (!synthesis_eligible(boxes[i]))
      continue;
    GeneratorRequest req;
    req.mask = mask_from_box(boxes[i], image.width, image.height);
    req.prompt = prompt_for(boxes[i], i);
    req.seed = derive_seed(seed, {i});
    req.image = std::move(r.image);
    auto out = generator.generate(req);
    if (out.image.width != image.width || out.image.height != image.height)
      throw ContractError("generator output size differs from its input");
    r.image = std::move(out.image);
    r.generator_id = std::move(out.generator_id);
    r.replaced.push_back(i);
    r.prompts.push_back(std::move(req.prompt));
    r.generator_seeds.push_back(req.seed);
  }
  return r;
}

namespace {

// Stream tags separating the independent random decisions of a run.
enum : std::uint64_t { kSampleStream = 1, kImageStream = 2, kTemplateStream = 3, kNoiseStream = 4 };

bool has_eligible_box(const DetectionDataset& d, const ImageRecord& im)
{
  const auto& idx = d.annotations_of(im.id);
  return std::any_of(idx.begin(), idx.end(),
                     [&](std::size_t i) { return synthesis_eligible(d.annotations()[i].box); });
}

std::string output_file_name(std::size_t k)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "ood_%06zu.png", k + 1);
  return (std::filesystem::path(kOodImageDir) / buf).generic_string();
}

struct ImageJob
{
  std::int64_t source_id = 0;
  std::optional<InpaintResult> result;
};

} // namespace

SynthesisResult build_ood_dataset(const DetectionDataset& d_in, const SynthesisOptions& options,
                                  Generator& generator, Embedder* embedder, const std::filesystem::path& out_dir)
{
  if (options.strategy == Strategy::distance && (!options.sigma || !embedder))
    throw ConfigError("distance strategy needs both sigma and an embedder");
  if (options.sigma && *options.sigma < 0)
    throw ConfigError("sigma must be non-negative");
  d_in.require_in_distribution();

  SynthesisResult out;
  auto categories = d_in.categories();
  int ood_category = 0;
  for (const auto& c : categories)
    ood_category = std::max(ood_category, c.id);
  ++ood_category;
  categories.push_back({ood_category, std::string(kOodCategoryName)});

  std::size_t eligible_images = 0;
  for (const auto& im : d_in.images())
    eligible_images += has_eligible_box(d_in, im);
  out.summary.eligible_image_fraction =
    d_in.empty() ? 0.0 : static_cast<double>(eligible_images) / static_cast<double>(d_in.images().size());

  // Draw the source images up front so the result does not depend on the
  // worker count.
  std::vector<ImageJob> jobs(options.n);
  if (options.n > 0) {
    if (d_in.empty())
      throw SynthesisError("cannot sample from an empty in-distribution dataset", "empty_dataset");
    ImageSampler sampler(d_in, derive_seed(options.seed, {kSampleStream}));
    const std::size_t retry_cap = 100 * options.n;
    for (auto& job : jobs) {
      for (;;) {
        const auto& im = d_in.images()[sampler.next_index()];
        if (has_eligible_box(d_in, im)) {
          job.source_id = im.id;
          break;
        }
        if (++out.summary.rejected_draws > retry_cap) {
          char frac[32];
          std::snprintf(frac, sizeof frac, "%.4f", out.summary.eligible_image_fraction);
          throw SynthesisError("retry cap of " + std::to_string(retry_cap) +
                                 " draws exhausted; eligible image fraction is " + frac,
                               "retry_cap_exhausted");
        }
      }
    }
  }

  std::map<int, ClassEmbedding> class_embeddings;
  if (options.strategy == Strategy::distance)
    for (const auto& c : d_in.foreground_categories())
      class_embeddings.emplace(c.id, embed_class_name(c.name, *embedder));

  const auto image_dir = out_dir / kOodImageDir;
  std::vector<std::filesystem::path> written;
  std::mutex written_mutex;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& p : written)
      std::filesystem::remove(p, ec);
    std::filesystem::remove(out_dir / kOodAnnotationFile, ec);
    std::filesystem::remove(out_dir / kManifestFile, ec);
    if (std::filesystem::is_directory(image_dir, ec) && std::filesystem::is_empty(image_dir, ec))
      std::filesystem::remove(image_dir, ec);
  };

  std::filesystem::create_directories(image_dir);

  auto run_job = [&](std::size_t k) {
    auto& job = jobs[k];
    const auto& src = d_in.image(job.source_id);
    RgbImage pixels = read_image(d_in.image_path(src));
    if (pixels.width != src.width || pixels.height != src.height)
      throw SynthesisError("image " + d_in.image_path(src).string() + " is " + std::to_string(pixels.width) + "x" +
                             std::to_string(pixels.height) + " but annotated as " + std::to_string(src.width) + "x" +
                             std::to_string(src.height),
                           "image_size_mismatch");
    std::vector<BoundingBox> boxes;
    for (std::size_t i : d_in.annotations_of(src.id))
      boxes.push_back(d_in.annotations()[i].box);

    PromptFactory prompt_for = [&](const BoundingBox& box, std::size_t i) {
      if (options.strategy == Strategy::generic) {
        const auto pick = derive_seed(options.seed, {kTemplateStream, k, i}) % kPromptTemplateCount;
        return render_generic_prompt(static_cast<int>(pick) + 1, d_in.category_name(box.category_id));
      }
      return perturb_embedding(class_embeddings.at(box.category_id), *options.sigma,
                               derive_seed(options.seed, {kNoiseStream, k, i}));
    };
    job.result = inpaint_sequence(pixels, boxes, prompt_for, generator, derive_seed(options.seed, {kImageStream, k}));
    const auto path = out_dir / output_file_name(k);
    {
      std::lock_guard lock(written_mutex);
      written.push_back(path);
    }
    write_png(job.result->image, path);
  };

  const int workers =
    static_cast<int>(std::min<std::size_t>({static_cast<std::size_t>(std::max(1, options.workers)),
                                            static_cast<std::size_t>(std::max(1, generator.max_in_flight())),
                                            std::max<std::size_t>(1, options.n)}));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      if (stop)
        return;
      const std::size_t k = next++;
      if (k >= jobs.size())
        return;
      try {
        run_job(k);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
        ++out.summary.failures;
        stop = true;
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back(worker);
  }
  if (failure) {
    cleanup();
    std::rethrow_exception(failure);
  }

  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;
  std::int64_t next_ann = 1;
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    const auto& job = jobs[k];
    const auto& src = d_in.image(job.source_id);
    const auto& res = *job.result;
    const auto out_id = static_cast<std::int64_t>(k + 1);
    images.push_back({out_id, output_file_name(k), src.width, src.height});

    const auto& src_anns = d_in.annotations_of(src.id);
    for (std::size_t i = 0; i < src_anns.size(); ++i) {
      Annotation a = d_in.annotations()[src_anns[i]];
      a.id = next_ann++;
      a.image_id = out_id;
      if (std::find(res.replaced.begin(), res.replaced.end(), i) != res.replaced.end()) {
        a.box.category_id = ood_category;
        a.is_ood = true;
      }
      annotations.push_back(a);
    }

    ManifestEntry e;
    e.source_image_id = src.id;
    e.output_image_id = out_id;
    e.replaced_boxes = res.replaced;
    e.strategy = options.strategy;
    e.generator_id = res.generator_id;
    e.seed = derive_seed(options.seed, {kImageStream, k});
    for (std::size_t r = 0; r < res.replaced.size(); ++r) {
      const auto& box = d_in.annotations()[src_anns[res.replaced[r]]].box;
      ObjectProvenance p;
      p.box_index = res.replaced[r];
      p.category_id = box.category_id;
      p.class_name = d_in.category_name(box.category_id);
      p.template_index = res.prompts[r].template_index;
      p.prompt_text = res.prompts[r].text;
      p.sigma = res.prompts[r].sigma;
      p.noise_seed = res.prompts[r].noise_seed;
      p.generator_seed = res.generator_seeds[r];
      e.objects.push_back(std::move(p));
    }
    out.manifest.entries.push_back(std::move(e));
  }
  out.summary.sampled = jobs.size();

  try {
    out.manifest.validate();
    out.dataset = DetectionDataset(std::move(categories), std::move(images), std::move(annotations), out_dir);
    save_dataset(out.dataset, out_dir / kOodAnnotationFile);
    write_manifest(out.manifest, out_dir / kManifestFile);
  } catch (...) {
    cleanup();
    throw;
  }
  return out;
}

} // namespace dreambox
