#include <doctest.h>

#include <fstream>
#include <sstream>

#include "kpoqa/config.hpp"
#include "kpoqa/error.hpp"

using namespace kpoqa;

namespace {

std::string read(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "test.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

const char* minimal = R"({
  "model": {"chi": [1], "detuning": [1], "pump": [1], "coherent_drive": [0], "cutoffs": [6]},
  "schedule": {"t_ann": 100, "a_s1": 0.5, "lambda": 0.1},
  "grids": {"omega": {"start": 0.9, "stop": 1.1, "count": 3, "scale": "gap"},
            "tau": {"start": 0, "stop": 10, "count": 4}}
})";

}  // namespace

TEST_CASE("bundled configurations load") {
  const RunConfig one = load_config(KPOQA_SOURCE_DIR "/configs/one_kpo.json");
  CHECK(one.cutoffs == std::vector<int>{5});
  CHECK(one.schedule.s1 == doctest::Approx(0.5));
  CHECK(one.params.coherent_drive[0] == 1.0);
  const RunConfig two = load_config(KPOQA_SOURCE_DIR "/configs/two_kpo.json");
  CHECK(two.params.modes() == 2);
  CHECK(two.params.coupling(1, 0) == cplx(0.1));
  CHECK(two.params.coupling(0, 1) == cplx(0.1));
  CHECK(two.protocol.open_system);
  CHECK(two.schedule.s1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("minimal configuration fills defaults") {
  const RunConfig c = parse_config(minimal);
  CHECK(c.level == 1);
  CHECK(c.observable.kind == "n");
  CHECK(c.omega_in_gap_units);
  CHECK(c.omega_grid(2.0) == std::vector<double>{1.8, 2.0, 2.2});
  CHECK(c.tau_grid() == std::vector<double>{0.0, 2.5, 5.0, 7.5});
  CHECK(c.params.gamma == 0.0);
}

TEST_CASE("round trip through the normalized form") {
  for (const char* name : {"/configs/one_kpo.json", "/configs/two_kpo.json"}) {
    const RunConfig c = load_config(std::string(KPOQA_SOURCE_DIR) + name);
    const nlohmann::json j = to_json(c);
    CHECK(to_json(parse_config(j.dump())) == j);
  }
  const nlohmann::json m = to_json(parse_config(minimal));
  CHECK(to_json(parse_config(m.dump(2))) == m);
}

TEST_CASE("errors carry the line and the JSON path") {
  std::string text = read(KPOQA_SOURCE_DIR "/configs/one_kpo.json");
  const auto at = text.find("\"gamma\"");
  REQUIRE(at != std::string::npos);
  const auto colon = text.find(':', at);
  const auto end = text.find_first_of(",\n}", colon);
  text.replace(colon + 1, end - colon - 1, " -0.5");
  const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(at), '\n'));
  const std::string msg = error_of(text);
  CHECK(msg.find("test.json:" + std::to_string(line) + ":") == 0);
  CHECK(msg.find("/model/gamma") != std::string::npos);
}

TEST_CASE("unknown and malformed entries are rejected") {
  std::string extra = minimal;
  extra.replace(extra.find("\"lambda\""), 8, "\"lambda\": 0.1, \"lamda\"");
  CHECK(error_of(extra).find("/schedule/lamda") != std::string::npos);

  CHECK(error_of("{").find("test.json:1:") == 0);
  std::string both = minimal;
  both.replace(both.find("\"a_s1\""), 6, "\"s1\": 0.5, \"a_s1\"");
  CHECK_FALSE(error_of(both).empty());
  std::string negative_count = minimal;
  negative_count.replace(negative_count.find("\"count\": 3"), 10, "\"count\": 0");
  CHECK(error_of(negative_count).find("/grids/omega/count") != std::string::npos);
  std::string bad_cutoff = minimal;
  bad_cutoff.replace(bad_cutoff.find("[6]"), 3, "[1]");
  CHECK(error_of(bad_cutoff).find("/model/cutoffs") != std::string::npos);
  std::string bad_kind = minimal;
  bad_kind.replace(bad_kind.find("\"grids\""), 7, "\"observable\": {\"kind\": \"q\"}, \"grids\"");
  CHECK(error_of(bad_kind).find("/observable/kind") != std::string::npos);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}
