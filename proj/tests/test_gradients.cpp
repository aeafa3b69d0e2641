#include <doctest.h>

#include "support.hpp"

using namespace calav;
using namespace calav::test;

namespace {

void check_groups(std::uint64_t seed, const TrainConfig& cfg) {
  const auto [e, b, u] = check_all_groups(seed, cfg);
  INFO("encoder/dml worst: " << e.worst);
  INFO("bfs worst: " << b.worst);
  INFO("ual worst: " << u.worst);
  CHECK(e.max_abs > 1e-6);
  CHECK(b.max_abs > 1e-6);
  CHECK(u.max_abs > 1e-6);
  CHECK(e.max_rel < 1e-4);
  CHECK(b.max_rel < 1e-4);
  CHECK(u.max_rel < 1e-4);
}

}  // namespace

TEST_SUITE("gradients") {
  TEST_CASE("every group matches central differences") {
    TrainConfig cfg;
    cfg.model = small_model_config();
    for (std::uint64_t seed : {1, 2, 3, 5, 6}) {
      CAPTURE(seed);
      check_groups(seed, cfg);
    }
  }

  TEST_CASE("tanh activation and legacy distance loss") {
    TrainConfig cfg;
    cfg.model = small_model_config();
    cfg.model.activation = Activation::Tanh;
    cfg.dml_loss = DmlLoss::Legacy;
    check_groups(4, cfg);
  }
}
