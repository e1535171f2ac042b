#include <doctest.h>

#include "cref/core/ops.hpp"
#include "cref/core/optim.hpp"

using namespace cref;

TEST_CASE("first AdamW update with unit gradient") {
  Tensor w = Tensor::parameter({1}, {2.0});
  AdamW opt({{"w", w}}, {.learning_rate = 0.1, .epsilon = 1e-8, .weight_decay = 0, .warmup_steps = 0});
  w.mutable_grad()[0] = 1.0;
  opt.step();
  // m_hat = v_hat = 1 after bias correction: delta = -lr / (1 + eps).
  CHECK(w[0] - 2.0 == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(opt.steps_taken() == 1);
  CHECK_FALSE(w.has_grad());
}

TEST_CASE("linear warmup") {
  Tensor w = Tensor::parameter({1}, {0.0});
  AdamW opt({{"w", w}}, {.learning_rate = 1e-3, .warmup_steps = 500});
  CHECK(opt.learning_rate_at(250) == doctest::Approx(0.5e-3));
  CHECK(opt.learning_rate_at(500) == doctest::Approx(1e-3));
  CHECK(opt.learning_rate_at(10000) == doctest::Approx(1e-3));
  for (std::size_t s = 1; s < 600; s += 37) CHECK(opt.learning_rate_at(s) <= 1e-3);
}

TEST_CASE("decoupled weight decay shrinks without gradient") {
  Tensor w = Tensor::parameter({2}, {4.0, -2.0});
  AdamW opt({{"w", w}}, {.learning_rate = 0.1, .weight_decay = 0.01});
  w.mutable_grad();  // zero gradient
  opt.step();
  CHECK(w[0] == doctest::Approx(4.0 - 0.1 * 0.01 * 4.0).epsilon(1e-14));
  CHECK(w[1] == doctest::Approx(-2.0 + 0.1 * 0.01 * 2.0).epsilon(1e-14));
}

TEST_CASE("missing gradient is rejected") {
  Tensor a = Tensor::parameter({1}, {1.0});
  Tensor b = Tensor::parameter({1}, {1.0});
  AdamW opt({{"a", a}, {"b", b}}, {.learning_rate = 0.1});
  backward(sum(a));
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("'b'"), std::logic_error);
  CHECK(opt.steps_taken() == 0);
}

TEST_CASE("moment buffers match parameter shapes") {
  Tensor a = Tensor::parameter({3, 2}, std::vector<real>(6, 1.0));
  Tensor b = Tensor::parameter({5}, std::vector<real>(5, 1.0));
  AdamW opt({{"a", a}, {"b", b}}, {});
  CHECK(opt.first_moment(0).size() == 6);
  CHECK(opt.second_moment(1).size() == 5);
}

TEST_CASE("AdamW minimizes a quadratic") {
  Tensor x = Tensor::parameter({2}, {3.0, -4.0});
  AdamW opt({{"x", x}}, {.learning_rate = 0.05, .weight_decay = 0});
  for (int i = 0; i < 500; ++i) {
    backward(sum(mul(x, x)));
    opt.step();
  }
  CHECK(std::abs(x[0]) < 1e-2);
  CHECK(std::abs(x[1]) < 1e-2);
}

TEST_CASE("non-trainable tensors are refused") {
  CHECK_THROWS_AS(AdamW({{"c", Tensor::zeros({1})}}, {}), std::invalid_argument);
}
