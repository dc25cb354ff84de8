#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "ssnmt/checkpoint.hpp"
#include "ssnmt/io.hpp"

using namespace ssnmt;
using namespace testing;

TEST_CASE("checkpoint round trip is bit-exact") {
  auto cfg = tiny_config();
  cfg.tied_embeddings = true;
  Checkpoint c{init_params(cfg, 11, 11, 5), 3, 42.5};
  const std::string bytes = serialize_checkpoint(c);
  CHECK(bytes.substr(0, 8) == "SSNMTCKP");
  const Checkpoint back = parse_checkpoint(bytes);
  CHECK(back.epoch == 3);
  CHECK(back.valid_bleu == 42.5);
  CHECK(back.params.config() == cfg);
  REQUIRE(back.params.entries().size() == c.params.entries().size());
  for (std::size_t i = 0; i < c.params.entries().size(); ++i) {
    CHECK(back.params.entries()[i].name == c.params.entries()[i].name);
    const auto a = c.params.entries()[i].tensor.data();
    const auto b = back.params.entries()[i].tensor.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  CHECK(serialize_checkpoint(back) == bytes);
}

TEST_CASE("save, load, save gives identical files") {
  auto dir = std::filesystem::temp_directory_path() / "ssnmt_ckpt_test";
  std::filesystem::create_directories(dir);
  Checkpoint c{init_params(tiny_config(), 9, 10, 6), 1, 0.0};
  save_checkpoint(dir / "a.bin", c);
  save_checkpoint(dir / "b.bin", load_checkpoint(dir / "a.bin"));
  CHECK(read_file(dir / "a.bin") == read_file(dir / "b.bin"));
}

TEST_CASE("corrupt checkpoints are rejected") {
  Checkpoint c{init_params(tiny_config(), 9, 9, 7), 1, 0.0};
  std::string bytes = serialize_checkpoint(c);
  CHECK_THROWS(parse_checkpoint("NOTACKPT"));
  CHECK_THROWS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)));
  CHECK_THROWS(parse_checkpoint(bytes + "x"));
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}
