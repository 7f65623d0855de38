#include "dreambox/prompts.hpp"

#include "dreambox/error.hpp"
#include "dreambox/hashing.hpp"
#include "dreambox/http.hpp"

#include <cstring>
#include <sstream>

namespace dreambox {

namespace detail {
extern const char* const kPromptResource; // generated from resources/
}

std::string_view prompt_resource_text()
{
  return detail::kPromptResource;
}

std::vector<PromptTemplate> parse_prompt_templates(std::string_view text, std::string_view expected_sha256)
{
  const std::string actual = sha256_hex(text);
  if (actual != expected_sha256)
    throw ContractError("prompt template resource checksum mismatch: expected " + std::string(expected_sha256) +
                          ", got " + actual,
                        "prompts");
  std::vector<PromptTemplate> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    const auto first = line.find("{}");
    if (first == std::string::npos || line.find("{}", first + 2) != std::string::npos)
      throw ContractError("prompt template " + std::to_string(out.size() + 1) + " must hold exactly one {}",
                          "prompts");
    out.push_back({static_cast<int>(out.size()) + 1, line});
  }
  return out;
}

const std::vector<PromptTemplate>& prompt_templates()
{
  static const std::vector<PromptTemplate> templates = [] {
    auto t = parse_prompt_templates(prompt_resource_text());
    if (t.size() != kPromptTemplateCount)
      throw ContractError("expected " + std::to_string(kPromptTemplateCount) + " prompt templates", "prompts");
    return t;
  }();
  return templates;
}

void PromptSpec::validate() const
{
  switch (kind) {
  case PromptKind::generic_text:
    if (!text || embedding)
      throw std::invalid_argument("generic_text prompt needs text and no embedding");
    break;
  case PromptKind::perturbed_embedding:
    if (!embedding || !sigma || !noise_seed)
      throw std::invalid_argument("perturbed_embedding prompt needs embedding, sigma and noise_seed");
    if (*sigma < 0)
      throw std::invalid_argument("perturbed_embedding prompt has negative sigma");
    break;
  }
}

std::string PromptSpec::digest() const
{
  if (kind == PromptKind::generic_text)
    return sha256_hex("text:" + text.value_or(""));
  std::string bytes = "embedding:";
  if (embedding) {
    const auto& v = *embedding;
    bytes.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  return sha256_hex(bytes);
}

PromptSpec render_generic_prompt(int template_index, std::string_view class_name)
{
  const auto& templates = prompt_templates();
  if (template_index < 1 || template_index > static_cast<int>(templates.size()))
    throw std::out_of_range("prompt template index " + std::to_string(template_index) + " outside 1.." +
                            std::to_string(templates.size()));
  if (class_name.empty())
    throw std::invalid_argument("render_generic_prompt: empty class name");
  std::string text = templates[static_cast<std::size_t>(template_index - 1)].text;
  text.replace(text.find("{}"), 2, class_name);
  PromptSpec spec;
  spec.kind = PromptKind::generic_text;
  spec.text = std::move(text);
  spec.template_index = template_index;
  return spec;
}

// ---------------------------------------------------------------------------

MockEmbedder::MockEmbedder(int dim) : dim_(dim)
{
  if (dim <= 0)
    throw std::invalid_argument("MockEmbedder: dimension must be positive");
}

std::string MockEmbedder::id() const
{
  return "mock-embedder-d" + std::to_string(dim_);
}

std::vector<Vector<double>> MockEmbedder::embed(std::span<const std::string> texts)
{
  std::vector<Vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    std::mt19937_64 rng(sha256_u64(t));
    std::normal_distribution<double> normal;
    Vector<double> v(dim_);
    for (auto& x : v)
      x = normal(rng);
    out.push_back(v / v.norm());
  }
  return out;
}

HttpEmbedder::HttpEmbedder(HttpAdapterOptions options, std::optional<int> expected_dim, bool serialized)
  : options_(std::move(options)), expected_dim_(expected_dim), serialized_(serialized)
{
  parse_endpoint(options_.endpoint);
}

std::string HttpEmbedder::id() const
{
  return "http-embedder:" + options_.endpoint;
}

std::vector<Vector<double>> HttpEmbedder::embed(std::span<const std::string> texts)
{
  std::unique_lock<std::mutex> lock(mutex_, std::defer_lock);
  if (serialized_)
    lock.lock();
  nlohmann::json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto reply = post_json(parse_endpoint(options_.endpoint), body, options_.timeout, options_.retries, "embed");

  try {
    const int dim = reply.at("dim").get<int>();
    const auto& vectors = reply.at("vectors");
    if (expected_dim_ && dim != *expected_dim_)
      throw ContractError("embedder reported dimension " + std::to_string(dim) + ", expected " +
                            std::to_string(*expected_dim_),
                          "embed");
    if (vectors.size() != texts.size())
      throw ContractError("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                            std::to_string(texts.size()) + " texts",
                          "embed");
    std::vector<Vector<double>> out;
    for (const auto& row : vectors) {
      if (static_cast<int>(row.size()) != dim)
        throw ContractError("embedder vector length " + std::to_string(row.size()) + " differs from dim " +
                              std::to_string(dim),
                            "embed");
      Vector<double> v(dim);
      for (int i = 0; i < dim; ++i)
        v[i] = row[static_cast<std::size_t>(i)].get<double>();
      if (!v.allFinite())
        throw ContractError("embedder returned non-finite components", "embed");
      out.push_back(std::move(v));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("malformed embedder reply: ") + e.what(), "embed");
  }
}

ClassEmbedding embed_class_name(std::string_view class_name, Embedder& embedder)
{
  if (class_name.empty())
    throw std::invalid_argument("embed_class_name: empty class name");
  const std::string name(class_name);
  auto vectors = embedder.embed(std::span(&name, 1));
  if (vectors.size() != 1 || vectors.front().size() == 0)
    throw ContractError("embedder returned no vector for '" + name + "'", "embed");
  return {name, std::move(vectors.front()), embedder.id()};
}

PromptSpec perturb_embedding(const ClassEmbedding& zeta, double sigma, std::uint64_t noise_seed)
{
  PromptSpec spec;
  spec.kind = PromptKind::perturbed_embedding;
  spec.embedding = perturbed(zeta.vector, sigma, noise_seed);
  spec.sigma = sigma;
  spec.noise_seed = noise_seed;
  return spec;
}

} // namespace dreambox
