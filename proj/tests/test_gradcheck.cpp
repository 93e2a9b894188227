#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "c4net/gradcheck.hpp"
#include "c4net/layers.hpp"
#include "generators.hpp"

using namespace c4net;

TEST_CASE("relative error definition") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == 0.5);
  CHECK(relative_error(-1.0, 1.0) == 2.0);
  // Below the floor differences are measured in absolute terms.
  CHECK(relative_error(1e-6, 2e-6) == doctest::Approx(1e-6 / kGradFloor));
}

TEST_CASE("scope resolution") {
  const auto& all = gradcheck_units();
  CHECK(resolve_scope("all") == all);
  for (const char* name : {"conv2d", "wbce", "wiou", "wel", "model", "psm", "cem", "dilate"}) {
    CHECK(std::find(all.begin(), all.end(), name) != all.end());
    CHECK(resolve_scope(name) == std::vector<std::string>{name});
  }
  const auto losses = resolve_scope("losses");
  for (const char* name : {"wbce", "wiou", "wel", "total_loss"}) {
    CHECK(std::find(losses.begin(), losses.end(), name) != losses.end());
  }
  CHECK(resolve_scope("ops").size() > 10);
  CHECK(resolve_scope("modules").size() > 5);
  CHECK(resolve_scope("model") == std::vector<std::string>{"model"});
  CHECK_THROWS_AS(resolve_scope("nonexistent"), ContractError);
}

TEST_CASE("every op, module and loss passes on ten seeds") {
  for (const auto& group : {"ops", "modules", "losses"}) {
    for (const auto& unit : resolve_scope(group)) {
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = run_gradcheck(unit, seed);
        CHECK_MESSAGE(r.pass(), unit, " seed ", seed, " max_rel_error ", r.max_rel_error, " kinks ", r.kinks);
        CHECK(r.checked > 0);
      }
    }
  }
}

TEST_CASE("micro model passes") {
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    const auto r = run_gradcheck("model", seed);
    CHECK_MESSAGE(r.pass(), "seed ", seed, " max_rel_error ", r.max_rel_error);
  }
}

TEST_CASE("a wrong backward is caught") {
  // y = x^3 with a backward that reports 2x^2.
  Rng rng(80);
  auto x = gen::tensor(rng, Shape{6}, 0.5, 2.0);
  x.set_requires_grad(true);
  auto forward = [&] {
    std::vector<double> v(x.values());
    for (auto& e : v) e = e * e * e;
    auto y = make_result<double>(x.shape(), std::move(v), {x.node_ptr()}, [](Node<double>& self) {
      auto& in = *self.inputs[0];
      auto& g = in.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 2 * in.value[i] * in.value[i];
    });
    return sum(y);
  };
  const auto bad = check_gradients("cube", {x}, forward, rng);
  CHECK_FALSE(bad.pass());
  CHECK(bad.max_rel_error > 0.1);

  auto good_forward = [&] { return sum(mul(mul(x, x), x)); };
  CHECK(check_gradients("cube", {x}, good_forward, rng).pass());
}

TEST_CASE("stencils across a relu kink are skipped") {
  Rng rng(81);
  Tensor<double> x(Shape{4}, std::vector<double>{1e-7, -2e-6, 0.7, -0.4});
  x.set_requires_grad(true);
  const auto r = check_gradients("relu_kink", {x}, [&] { return sum(relu(x)); }, rng);
  CHECK(r.kinks == 2);
  CHECK(r.checked == 2);
  CHECK(r.max_rel_error < kGradTolerance);
  CHECK(r.pass());
}
