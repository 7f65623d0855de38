#include "dreambox/error.hpp"
#include "dreambox/hashing.hpp"
#include "dreambox/prompts.hpp"

#include "test_server.hpp"

#include <doctest.h>

#include <cmath>

using namespace dreambox;

TEST_CASE("templates are the shipped resource")
{
  const auto& t = prompt_templates();
  REQUIRE(t.size() == 20);
  CHECK(sha256_hex(prompt_resource_text()) == kPromptResourceSha256);
  CHECK(t[0].text == "A {} that defies the laws of physics, floating in mid-air with strange edges.");
  CHECK(t[8].text == "A {} made of plastic that constantly reconfigures itself into different shapes.");
  CHECK(t[19].text == "A smooth {} that seems to be melting and reforming simultaneously, surrounded by mist.");
  for (int i = 0; i < 20; ++i)
    CHECK(t[static_cast<std::size_t>(i)].index == i + 1);
}

TEST_CASE("rendering substitutes the class name once")
{
  const auto spec = render_generic_prompt(1, "dog");
  CHECK(*spec.text == "A dog that defies the laws of physics, floating in mid-air with strange edges.");
  CHECK(spec.kind == PromptKind::generic_text);
  CHECK(*spec.template_index == 1);
  spec.validate();
  for (int i = 1; i <= 20; ++i) {
    const auto text = *render_generic_prompt(i, "giraffe").text;
    CHECK(text.find("{}") == std::string::npos);
    CHECK(text.find("giraffe") != std::string::npos);
  }
  CHECK_THROWS_AS(render_generic_prompt(21, "dog"), std::out_of_range);
  CHECK_THROWS_AS(render_generic_prompt(0, "dog"), std::out_of_range);
  CHECK_THROWS_AS(render_generic_prompt(3, ""), std::invalid_argument);
}

TEST_CASE("edited resources fail the checksum")
{
  std::string text(prompt_resource_text());
  text[2] = 'X';
  CHECK_THROWS_AS(parse_prompt_templates(text), ContractError);
  CHECK(parse_prompt_templates("A {}.\n", sha256_hex("A {}.\n")).size() == 1);
  CHECK_THROWS_AS(parse_prompt_templates("A {} {}.\n", sha256_hex("A {} {}.\n")), ContractError);
  CHECK_THROWS_AS(parse_prompt_templates("A thing.\n", sha256_hex("A thing.\n")), ContractError);
}

TEST_CASE("mock embedder")
{
  MockEmbedder e(64);
  const auto a = embed_class_name("dog", e);
  const auto b = embed_class_name("dog", e);
  CHECK(a.vector.size() == 64);
  CHECK(a.vector == b.vector);
  CHECK(std::abs(a.vector.norm() - 1.0) < 1e-12);
  CHECK(embed_class_name("cat", e).vector != a.vector);
  CHECK(a.embedder_id == e.id());
  CHECK_THROWS_AS(MockEmbedder(0), std::invalid_argument);
  CHECK_THROWS_AS(embed_class_name("", e), std::invalid_argument);
}

TEST_CASE("perturbation")
{
  MockEmbedder e(64);
  const auto zeta = embed_class_name("dog", e);

  SUBCASE("sigma zero is the identity")
  {
    for (std::uint64_t s = 0; s < 20; ++s)
      CHECK(*perturb_embedding(zeta, 0.0, s).embedding == zeta.vector);
  }
  SUBCASE("same seed, same vector")
  {
    CHECK(*perturb_embedding(zeta, 2.5, 11).embedding == *perturb_embedding(zeta, 2.5, 11).embedding);
    CHECK(*perturb_embedding(zeta, 2.5, 11).embedding != *perturb_embedding(zeta, 2.5, 12).embedding);
  }
  SUBCASE("records sigma and seed")
  {
    const auto p = perturb_embedding(zeta, 1.5, 99);
    p.validate();
    CHECK(*p.sigma == 1.5);
    CHECK(*p.noise_seed == 99);
    CHECK(p.kind == PromptKind::perturbed_embedding);
  }
  SUBCASE("negative sigma is rejected")
  {
    CHECK_THROWS_AS(perturb_embedding(zeta, -0.1, 1), std::invalid_argument);
  }
  SUBCASE("per-component variance is sigma squared")
  {
    // Pool 2000 draws of the 64 components; the sample variance of the
    // offsets should sit within a few standard errors of sigma^2.
    const double sigma = 1.7;
    double sum = 0, sum_sq = 0;
    std::size_t n = 0;
    for (std::uint64_t s = 0; s < 2000; ++s) {
      const Vector<double> d = *perturb_embedding(zeta, sigma, s).embedding - zeta.vector;
      sum += d.sum();
      sum_sq += d.squaredNorm();
      n += static_cast<std::size_t>(d.size());
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 4 * sigma / std::sqrt(double(n)));
    CHECK(std::abs(var / (sigma * sigma) - 1.0) < 4 * std::sqrt(2.0 / n));
  }
}

TEST_CASE("prompt spec validation")
{
  PromptSpec s;
  s.kind = PromptKind::generic_text;
  CHECK_THROWS(s.validate());
  s.kind = PromptKind::perturbed_embedding;
  s.embedding = Vector<double>::Zero(4);
  s.sigma = 1.0;
  CHECK_THROWS(s.validate());
  s.noise_seed = 3;
  s.validate();
}

TEST_CASE("HTTP embedder")
{
  testing::JsonServer server([](const nlohmann::json& body, int&) {
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& t : body.at("texts"))
      vectors.push_back(std::vector<double>(8, static_cast<double>(t.get<std::string>().size())));
    return nlohmann::json{{"dim", 8}, {"vectors", vectors}};
  });

  SUBCASE("parses vectors")
  {
    HttpEmbedder e({server.url(), std::chrono::milliseconds(2000), 0}, 8);
    const auto z = embed_class_name("horse", e);
    CHECK(z.vector.size() == 8);
    CHECK(z.vector[3] == 5.0);
  }
  SUBCASE("dimension mismatch is a contract error")
  {
    HttpEmbedder e({server.url(), std::chrono::milliseconds(2000), 0}, 512);
    CHECK_THROWS_AS(embed_class_name("horse", e), ContractError);
  }
  SUBCASE("unreachable service is a transport error")
  {
    HttpEmbedder e({testing::dead_url(), std::chrono::milliseconds(500), 1}, 8);
    CHECK_THROWS_AS(embed_class_name("horse", e), TransportError);
  }
}

TEST_CASE("HTTP embedder rejects malformed replies and error statuses")
{
  testing::JsonServer short_rows([](const nlohmann::json&, int&) {
    return nlohmann::json{{"dim", 4}, {"vectors", {{1.0, 2.0}}}};
  });
  HttpEmbedder a({short_rows.url(), std::chrono::milliseconds(2000), 0});
  CHECK_THROWS_AS(embed_class_name("x", a), ContractError);

  testing::JsonServer failing([](const nlohmann::json&, int& status) {
    status = 503;
    return nlohmann::json::object();
  });
  HttpEmbedder b({failing.url(), std::chrono::milliseconds(2000), 2});
  CHECK_THROWS_AS(embed_class_name("x", b), TransportError);
}
