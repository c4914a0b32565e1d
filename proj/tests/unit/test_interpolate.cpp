#include <doctest.h>

#include <random>
#include <sstream>

#include "child/interpolate.hpp"
#include "support.hpp"

using namespace child;
using child::testing::random_matrix;
using child::testing::small_model_config;

namespace {

struct Fixture {
  ChildModel model{small_model_config(1), 31};
  Mat window;
  LatentStack base;

  Fixture() {
    std::mt19937_64 rng(32);
    std::normal_distribution<double> n(0.0, 0.15);
    for (ad::Parameter* p : model.parameters().all()) {
      if (p->name.rfind("prior.", 0) == 0)
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += n(rng);
    }
    window = random_matrix(8, 3, rng);
    base = model.encode_context(window, 8);
  }
};

int count_lines(const std::string& s) {
  std::istringstream in(s);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("interpolate") {
  TEST_CASE("editing a latent to its encoded value changes nothing") {
    Fixture f;
    for (int layer : {1, 2}) {
      InterpolationRequest req;
      req.layer = layer;
      req.component = 0;
      req.timestep = 4;
      req.grid = {f.base.mean[static_cast<std::size_t>(layer - 1)](4, 0)};
      const InterpolationResult r = interpolate_latent(f.model, f.window, req);
      CHECK((r.series[0] - r.reconstruction).cwiseAbs().maxCoeff() == 0.0);
      CHECK(r.moved_features == 0);
    }
  }

  TEST_CASE("bottom-layer edit at one step only moves that step") {
    Fixture f;
    InterpolationRequest req;
    req.layer = 1;
    req.component = 2;
    req.timestep = 3;
    req.grid = {-2.0, 2.0};
    const InterpolationResult r = interpolate_latent(f.model, f.window, req);
    for (const Mat& s : r.series) {
      for (int t = 0; t < 8; ++t) {
        const double d = (s.row(t) - r.reconstruction.row(t)).cwiseAbs().maxCoeff();
        if (t == 3) {
          CHECK(d > 0.0);
        } else {
          CHECK(d == 0.0);
        }
      }
    }
  }

  TEST_CASE("top-layer edit reaches the bottom layer from the edited step onward") {
    Fixture f;
    InterpolationRequest req;
    req.layer = 2;
    req.component = 0;
    req.timestep = 3;
    req.grid = {f.base.mean[1](3, 0) + 1.5};
    const InterpolationResult r = interpolate_latent(f.model, f.window, req);
    const Mat& bottom = r.latents[0][0];
    for (int t = 0; t < 3; ++t) CHECK((bottom.row(t) - f.base.mean[0].row(t)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((bottom.row(3) - f.base.mean[0].row(3)).cwiseAbs().maxCoeff() > 0.0);
    CHECK((r.series[0].row(3) - r.reconstruction.row(3)).cwiseAbs().maxCoeff() > 0.0);
  }

  TEST_CASE("one output block per grid value") {
    Fixture f;
    InterpolationRequest req;
    req.layer = 2;
    req.grid = {-2, -1, 0, 1, 2};
    const InterpolationResult r = interpolate_latent(f.model, f.window, req);
    CHECK(r.series.size() == 5);
    CHECK(r.latents.size() == 5);
    CHECK(r.rms_change.rows() == 5);
    CHECK(r.rms_change.cols() == 3);
    CHECK(count_lines(r.to_csv()) == 1 + 5 * 8 * 3);
    const nlohmann::json s = r.summary_json();
    CHECK(s.at("grid").size() == 5);
    for (const Mat& z : r.latents[2]) CHECK(z.rows() == 8);
    for (int t = 0; t < 8; ++t) CHECK(r.latents[4][1](t, 0) == 2.0);
  }

  TEST_CASE("invalid requests") {
    Fixture f;
    InterpolationRequest req;
    req.grid = {0.0};
    req.component = 3;
    CHECK_THROWS_AS(interpolate_latent(f.model, f.window, req), ConfigError);
    req.component = 0;
    req.layer = 3;
    CHECK_THROWS_AS(interpolate_latent(f.model, f.window, req), ConfigError);
    req.layer = 1;
    req.timestep = 8;
    CHECK_THROWS_AS(interpolate_latent(f.model, f.window, req), ConfigError);
    req.timestep.reset();
    req.grid.clear();
    CHECK_THROWS_AS(interpolate_latent(f.model, f.window, req), ConfigError);
    req.grid = {1.0};
    CHECK_THROWS_AS(interpolate_latent(f.model, Mat::Zero(8, 2), req), DataError);
  }

  TEST_CASE("top-layer edit moves at least as many features as a bottom-layer edit") {
    Fixture f;
    InterpolationRequest top;
    top.layer = 2;
    top.grid = {-2.0, 2.0};
    InterpolationRequest bottom = top;
    bottom.layer = 1;
    const InterpolationResult rt = interpolate_latent(f.model, f.window, top);
    const InterpolationResult rb = interpolate_latent(f.model, f.window, bottom);
    CHECK(rt.moved_features >= rb.moved_features);
  }
}
