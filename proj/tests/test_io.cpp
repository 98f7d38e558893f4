#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "core/io.hpp"
#include "oracles.hpp"

using namespace brm;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("brm_io_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("format_double survives round trips") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::exp(20.0 * (rng.uniform() - 0.5)) * rng.gaussian();
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("preference CSV round trip") {
  const fs::path dir = temp_dir("prefs");
  const auto data = oracles::random_batch(5, 3, 10);
  const std::string path = (dir / "prefs.csv").string();
  save_preferences(path, data);

  const auto loaded = load_preferences(path);
  REQUIRE(loaded.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(loaded[i].prompt_id == data[i].prompt_id);
    CHECK(loaded[i].winner == data[i].winner);
    CHECK(loaded[i].loser == data[i].loser);
  }
  CHECK(dataset_fingerprint(loaded) == dataset_fingerprint(data));

  // Re-saving the loaded data reproduces the bytes.
  const std::string path2 = (dir / "prefs2.csv").string();
  save_preferences(path2, loaded);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("preference CSV schema errors carry file and line context") {
  const fs::path dir = temp_dir("prefs_bad");
  const std::string path = (dir / "bad.csv").string();
  {
    std::ofstream out(path);
    out << "prompt_id,w0,l0\n";
    out << "0,1.5,2.5\n";
    out << "1,oops,2.5\n";
  }
  try {
    load_preferences(path);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    const std::string what = e.what();
    CHECK(what.find("bad.csv:3") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "prompt_id,w0,l0\n";
    out << "0,1.5\n";
  }
  CHECK_THROWS_AS(load_preferences(path), SchemaError);
  CHECK_THROWS_AS(load_preferences((dir / "missing.csv").string()), UsageError);
}

TEST_CASE("pool CSV round trip and alignment validation") {
  const fs::path dir = temp_dir("pool");
  ResponsePool pool;
  pool.evaluators = {"gold", "lambda"};
  Rng rng(6);
  for (int p = 0; p < 3; ++p) {
    PromptResponses prompt;
    prompt.prompt_id = p;
    prompt.proxy.resize(5);
    Vec gold(5), lambda(5);
    for (int r = 0; r < 5; ++r) {
      prompt.proxy[r] = rng.gaussian();
      gold[r] = rng.gaussian();
      lambda[r] = rng.uniform();
    }
    prompt.evals["gold"] = gold;
    prompt.evals["lambda"] = lambda;
    pool.prompts.push_back(std::move(prompt));
  }
  const std::string path = (dir / "pool.csv").string();
  save_pool(path, pool);
  const ResponsePool loaded = load_pool(path);
  REQUIRE(loaded.prompts.size() == 3);
  CHECK(loaded.evaluators == pool.evaluators);
  for (std::size_t p = 0; p < 3; ++p) {
    CHECK(loaded.prompts[p].proxy == pool.prompts[p].proxy);
    CHECK(loaded.prompts[p].evals == pool.prompts[p].evals);
  }

  {
    std::ofstream out(path);
    out << "prompt_id,response_id,proxy_score,gold\n";
    out << "0,0,1.0,2.0\n";
    out << "0,2,1.0,2.0\n";  // breaks the index alignment
  }
  CHECK_THROWS_AS(load_pool(path), SchemaError);
}

TEST_CASE("feature pool round trip") {
  const fs::path dir = temp_dir("features");
  FeaturePool pool;
  pool.dim = 3;
  pool.evaluators = {"gold"};
  Rng rng(7);
  for (int p = 0; p < 2; ++p) {
    FeaturePool::Prompt prompt;
    prompt.prompt_id = p;
    for (int r = 0; r < 4; ++r) {
      Vec x(3);
      for (double& v : x) v = rng.gaussian();
      prompt.features.push_back(x);
      prompt.evals["gold"].push_back(rng.gaussian());
    }
    pool.prompts.push_back(std::move(prompt));
  }
  const std::string path = (dir / "responses.csv").string();
  save_feature_pool(path, pool);
  const FeaturePool loaded = load_feature_pool(path);
  CHECK(loaded.dim == 3);
  CHECK(loaded.evaluators == pool.evaluators);
  REQUIRE(loaded.prompts.size() == 2);
  for (std::size_t p = 0; p < 2; ++p) {
    CHECK(loaded.prompts[p].features == pool.prompts[p].features);
    CHECK(loaded.prompts[p].evals == pool.prompts[p].evals);
  }
}

TEST_CASE("net checkpoint round trip is exact") {
  const fs::path dir = temp_dir("net");
  RewardNet net = oracles::randomized_net(9, 4, {6, 3}, 2);
  net.provenance = TrainProvenance{true, 0xDEADBEEFCAFEBABEull, 1.5};
  const std::string path = (dir / "net.json").string();
  save_net(path, net);
  const RewardNet loaded = load_net(path);

  CHECK(flatten(loaded) == flatten(net));
  REQUIRE(loaded.layers.size() == net.layers.size());
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    CHECK(loaded.layers[li].w0 == net.layers[li].w0);
    CHECK(loaded.layers[li].bias == net.layers[li].bias);
  }
  CHECK(loaded.seed == net.seed);
  CHECK(loaded.activation == net.activation);
  CHECK(loaded.provenance.present);
  CHECK(loaded.provenance.data_fingerprint == net.provenance.data_fingerprint);
  CHECK(loaded.provenance.lambda == net.provenance.lambda);

  Rng rng(99);
  for (int i = 0; i < 20; ++i) {
    Vec x(4);
    for (double& v : x) v = rng.gaussian();
    CHECK(forward(loaded, x) == forward(net, x));
  }
}

TEST_CASE("net checkpoint rejects version and shape problems") {
  const fs::path dir = temp_dir("net_bad");
  const std::string path = (dir / "net.json").string();
  {
    std::ofstream out(path);
    out << R"({"format":"brm-net","format_version":2})";
  }
  CHECK_THROWS_AS(load_net(path), SchemaError);
  {
    std::ofstream out(path);
    out << R"({"format":"something-else","format_version":1})";
  }
  CHECK_THROWS_AS(load_net(path), SchemaError);
  {
    std::ofstream out(path);
    out << "not json at all";
  }
  CHECK_THROWS_AS(load_net(path), SchemaError);
  CHECK_THROWS_AS(load_net((dir / "absent.json").string()), UsageError);
}

TEST_CASE("posterior checkpoint round trip is exact") {
  const fs::path dir = temp_dir("post");
  const RewardNet net = oracles::randomized_net(12, 3, {4}, 1);
  const auto data = oracles::random_batch(121, 3, 6);
  const PosteriorState post = fit_ggn_posterior(net, data, 0.8);
  const std::string path = (dir / "posterior.json").string();
  save_posterior(path, post);
  const PosteriorState loaded = load_posterior(path);
  CHECK(loaded.theta_map == post.theta_map);
  CHECK(loaded.covariance == post.covariance);
  CHECK(loaded.lambda == post.lambda);
  CHECK(loaded.data_fingerprint == post.data_fingerprint);
}

TEST_CASE("curve CSV format") {
  const fs::path dir = temp_dir("curve");
  const std::vector<CurveRow> rows = {
      {"map", 0.0, 1, 0.0, "gold", 0.25},
      {"la_var", 3.0, 16, 1.8345, "proxy", -1.5},
  };
  const std::string path = (dir / "curve.csv").string();
  save_curve(path, rows);
  CHECK(slurp(path) ==
        "method,k,n,kl,evaluator,value\n"
        "map,0,1,0,gold,0.25\n"
        "la_var,3,16,1.8345,proxy,-1.5\n");
}

TEST_CASE("hex hash round trip") {
  CHECK(from_hex_u64(to_hex_u64(0)) == 0);
  CHECK(from_hex_u64(to_hex_u64(0xFFFFFFFFFFFFFFFFull)) == 0xFFFFFFFFFFFFFFFFull);
  CHECK(from_hex_u64(to_hex_u64(123456789)) == 123456789);
  CHECK_THROWS_AS(from_hex_u64("123"), SchemaError);
}
