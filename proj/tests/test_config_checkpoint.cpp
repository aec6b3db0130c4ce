#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sider/checkpoint.hpp"
#include "sider/config.hpp"
#include "test_helpers.hpp"

namespace fs = std::filesystem;
using namespace sider;
using namespace sider::testing;

namespace {
const char* kMinimalJson = R"({
  "data": {"source": "synthetic"},
  "diffusion": {},
  "attack": {},
  "crm": {},
  "eval": {}
})";
}

TEST_CASE("config defaults mirror the published constants") {
    PipelineConfig c = PipelineConfig::from_json_text(kMinimalJson);
    CHECK(c.attack.alpha == 0.01);
    CHECK(c.attack.mu == 0.6);
    CHECK(c.attack.N == 30);
    CHECK(c.diffusion.T == 20);
    CHECK(c.diffusion.strength == 0.75);
    CHECK(c.diffusion.s == 1.0);
    CHECK(c.diffusion.lambda == 3.0);
    CHECK(c.diffusion.lambda * c.diffusion.s == 3.0);  // effective guidance
    CHECK(c.eval.far_target == 0.01);
    CHECK(c.data.resolution == 64);
}

TEST_CASE("missing and unknown keys are named") {
    CHECK_THROWS_WITH_AS(PipelineConfig::from_json_text(R"({"data":{"source":"s"}})"),
                         doctest::Contains("diffusion"), ConfigError);
    CHECK_THROWS_WITH_AS(
        PipelineConfig::from_json_text(
            R"({"data":{},"diffusion":{},"attack":{},"crm":{},"eval":{}})"),
        doctest::Contains("data.source"), ConfigError);
    CHECK_THROWS_WITH_AS(
        PipelineConfig::from_json_text(
            R"({"data":{"source":"synthetic","typo_key":1},"diffusion":{},"attack":{},"crm":{},"eval":{}})"),
        doctest::Contains("data.typo_key"), ConfigError);
    CHECK_THROWS_WITH_AS(
        PipelineConfig::from_json_text(
            R"({"data":{"source":"synthetic"},"diffusion":{"T":0},"attack":{},"crm":{},"eval":{}})"),
        doctest::Contains("diffusion.T"), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
    PipelineConfig a = PipelineConfig::from_json_text(kMinimalJson);
    PipelineConfig b = PipelineConfig::from_json_text(kMinimalJson);
    CHECK(a.config_hash() == b.config_hash());
    b.attack.mu = 0.0;
    CHECK(a.config_hash() != b.config_hash());
}

TEST_CASE("toml subset parses the same structure") {
    const char* toml = R"(
# pipeline config
[data]
source = "synthetic"
resolution = 64
n_identities = 10

[diffusion]
T = 10
strength = 0.5

[attack]
N = 5
alpha = 0.02
seeds = [3, 4]

[crm]
loss_weights = [1.0, 2.0, 4.0, 1.0, 1.0]

[eval]
far_target = 0.05
)";
    PipelineConfig c = PipelineConfig::from_toml_text(toml);
    CHECK(c.data.n_identities == 10);
    CHECK(c.diffusion.T == 10);
    CHECK(c.diffusion.strength == 0.5);
    CHECK(c.attack.N == 5);
    CHECK(c.attack.alpha == 0.02);
    CHECK(c.attack.seeds == std::vector<uint64_t>{3, 4});
    CHECK(c.eval.far_target == 0.05);

    // same content as JSON -> same hash
    PipelineConfig j = PipelineConfig::from_json_text(c.to_json());
    CHECK(j.config_hash() == c.config_hash());
}

TEST_CASE("checkpoint container round trips with f32 storage") {
    Rng rng(17);
    Tensor a = rng.randn({3, 4});
    Tensor b = rng.randn({8});
    ParamList params = {{"layer.w", &a}, {"layer.b", &b}};
    CHECK(checkpoint::total_params(params) == 20);

    fs::path path = fs::temp_directory_path() / "sider_ckpt_test.bin";
    checkpoint::save(path.string(), params, R"({"kind":"test","epochs_trained":3})");

    Tensor a2 = Tensor::zeros({3, 4});
    Tensor b2 = Tensor::zeros({8});
    ParamList loaded = {{"layer.w", &a2}, {"layer.b", &b2}};
    std::string meta = checkpoint::load(path.string(), loaded);
    CHECK(meta.find("\"epochs_trained\":3") != std::string::npos);
    CHECK(checkpoint::read_meta(path.string()) == meta);

    // f32 storage: equal after float rounding
    for (int64_t i = 0; i < a.size(); ++i) CHECK(a2[i] == (real)(float)a[i]);
    for (int64_t i = 0; i < b.size(); ++i) CHECK(b2[i] == (real)(float)b[i]);

    // shape-table mismatch is rejected
    Tensor wrong = Tensor::zeros({4, 3});
    ParamList bad = {{"layer.w", &wrong}, {"layer.b", &b2}};
    CHECK_THROWS(checkpoint::load(path.string(), bad));

    // name mismatch is rejected
    ParamList bad2 = {{"layer.weight", &a2}, {"layer.b", &b2}};
    CHECK_THROWS(checkpoint::load(path.string(), bad2));

    // corrupt magic
    std::ofstream(path, std::ios::binary) << "NOTMAGIC garbage";
    CHECK_THROWS(checkpoint::read_meta(path.string()));
    fs::remove(path);
}
