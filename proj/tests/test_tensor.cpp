#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "oracles.hpp"
#include "skdf/rng.hpp"
#include "skdf/tensor.hpp"

using namespace skdf;
using ad::Tape;
using ad::Tensor;

namespace {

std::vector<double> random_values(Rng& rng, std::int64_t n, double lo, double hi, double keep_away_from_zero = 0.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (keep_away_from_zero > 0.0 && std::fabs(x) < keep_away_from_zero);
  }
  return v;
}

// Gradient check harness: builds a scalar root from leaves, compares the
// tape gradient of every leaf against central finite differences.
struct GradCase {
  std::vector<ad::Shape> shapes;
  std::function<Tensor(Tape&, std::vector<Tensor>&)> build;
  double lo = -1.0;
  double hi = 1.0;
  double keep_away_from_zero = 0.0;
};

double run_grad_case(const GradCase& c, Rng& rng) {
  std::vector<std::vector<double>> inputs;
  for (const auto& s : c.shapes) inputs.push_back(random_values(rng, ad::numel(s), c.lo, c.hi, c.keep_away_from_zero));

  Tape tape;
  std::vector<Tensor> leaves;
  for (std::size_t i = 0; i < c.shapes.size(); ++i) leaves.push_back(tape.leaf(c.shapes[i], inputs[i]));
  Tensor root = c.build(tape, leaves);
  tape.backward(root);

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto analytic = tape.grad(leaves[li]);
    auto f = [&](const std::vector<double>& x) {
      Tape t2;
      std::vector<Tensor> l2;
      for (std::size_t i = 0; i < c.shapes.size(); ++i) l2.push_back(t2.leaf(c.shapes[i], i == li ? x : inputs[i]));
      return c.build(t2, l2).value();
    };
    auto fd = oracles::finite_difference_gradient(f, inputs[li]);
    worst = std::max(worst, oracles::max_rel_error(analytic, fd));
  }
  return worst;
}

void check_primitive(const GradCase& c, int reps = 100, double tol = 1e-4, std::uint64_t seed = 7) {
  Rng rng(seed);
  double worst = 0.0;
  for (int r = 0; r < reps; ++r) worst = std::max(worst, run_grad_case(c, rng));
  CHECK(worst < tol);
}

// Fixed pseudo-random weights so the reduction exercises every output
// coordinate; deterministic so FD and analytic passes see one function.
Tensor weighted_sum(Tape&, const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> w(static_cast<std::size_t>(y.size()));
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return ad::sum(ad::mul(y, Tensor::constant(y.shape(), w)));
}

}  // namespace

TEST_CASE("forward op examples") {
  Tensor a = Tensor::constant({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  auto prod = ad::matmul(a, eye);
  CHECK(prod.values() == std::vector<double>{1, 2, 3, 4});

  CHECK(ad::sigmoid(Tensor::scalar(0.0)).value() == doctest::Approx(0.5).epsilon(1e-15));

  auto sm = ad::softmax(Tensor::constant({3}, {1, 1, 1}));
  for (double v : sm.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  // Leading-axis broadcasting.
  auto bias = ad::add(Tensor::constant({2, 3}, {0, 0, 0, 1, 1, 1}), Tensor::constant({3}, {1, 2, 3}));
  CHECK(bias.values() == std::vector<double>{1, 2, 3, 2, 3, 4});
}

TEST_CASE("shape mismatch is rejected with both shapes reported") {
  Tensor a = Tensor::constant({2, 3}, std::vector<double>(6, 0.0));
  Tensor b = Tensor::constant({2, 2}, std::vector<double>(4, 0.0));
  CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("[2, 3]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(ad::add(a, b), doctest::Contains("[2, 2]"), std::invalid_argument);
  CHECK_THROWS_AS(ad::matmul(a, a), std::invalid_argument);
  // Trailing broadcast is not leading-axis broadcast.
  Tensor col = Tensor::constant({2, 1}, {1, 2});
  CHECK_THROWS_AS(ad::add(a, col), std::invalid_argument);
}

TEST_CASE("backward trivial cases") {
  Tape tape;
  Tensor x = tape.leaf({2, 3}, {1, 2, 3, 4, 5, 6});

  SUBCASE("sum gradient is all ones") {
    tape.backward(ad::sum(x));
    CHECK(tape.grad(x) == std::vector<double>(6, 1.0));
  }
  SUBCASE("sum of squares gradient is 2x") {
    tape.backward(ad::sum(ad::mul(x, x)));
    CHECK(tape.grad(x) == std::vector<double>{2, 4, 6, 8, 10, 12});
  }
  SUBCASE("non-scalar root is rejected") { CHECK_THROWS_AS(tape.backward(x), std::invalid_argument); }
}

TEST_CASE("backward is deterministic across passes") {
  Rng rng(11);
  Tape tape;
  Tensor x = tape.leaf({4, 4}, random_values(rng, 16, -1, 1));
  Tensor w = tape.leaf({4, 4}, random_values(rng, 16, -1, 1));
  Tensor root = ad::sum(ad::sigmoid(ad::matmul(x, ad::layer_norm(w))));
  tape.backward(root);
  auto g1x = tape.grad(x);
  auto g1w = tape.grad(w);
  tape.backward(root);
  CHECK(tape.grad(x) == g1x);
  CHECK(tape.grad(w) == g1w);
}

TEST_CASE("gradient linearity in loss combination") {
  Rng rng(13);
  auto values = random_values(rng, 12, -1, 1);
  const double a = 2.25, b = -0.75;

  auto grads_for = [&](double ca, double cb) {
    Tape tape;
    Tensor x = tape.leaf({3, 4}, values);
    Tensor f = ad::sum(ad::sigmoid(x));
    Tensor g = ad::sum(ad::mul(x, x));
    tape.backward(ad::add(ad::mul(Tensor::scalar(ca), f), ad::mul(Tensor::scalar(cb), g)));
    return tape.grad(x);
  };

  auto gf = grads_for(1.0, 0.0);
  auto gg = grads_for(0.0, 1.0);
  auto combined = grads_for(a, b);
  for (std::size_t i = 0; i < combined.size(); ++i)
    CHECK(combined[i] == doctest::Approx(a * gf[i] + b * gg[i]).epsilon(1e-12));
}

TEST_CASE("primitive gradients match finite differences") {
  

  SUBCASE("add") {
    check_primitive({{{2, 3}, {2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::add(l[0], l[1])); }});
  }
  SUBCASE("add broadcast") {
    check_primitive(
        {{{2, 3}, {3}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::add(l[0], l[1])); }});
  }
  SUBCASE("sub") {
    check_primitive({{{2, 3}, {2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::sub(l[0], l[1])); }});
  }
  SUBCASE("mul") {
    check_primitive({{{2, 3}, {2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::mul(l[0], l[1])); }});
  }
  SUBCASE("mul broadcast scalar") {
    check_primitive(
        {{{2, 3}, {1}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::mul(l[0], l[1])); }});
  }
  SUBCASE("div") {
    check_primitive({{{2, 3}, {2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::div(l[0], l[1])); },
                     0.2, 1.5});
  }
  SUBCASE("matmul") {
    check_primitive({{{2, 3}, {3, 4}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::matmul(l[0], l[1])); }});
  }
  SUBCASE("transpose") {
    check_primitive(
        {{{2, 4}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::transpose(l[0])); }});
  }
  SUBCASE("sigmoid") {
    check_primitive(
        {{{2, 3}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::sigmoid(l[0])); }, -3, 3});
  }
  SUBCASE("relu") {
    check_primitive({{{2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::relu(l[0])); },
                     -1, 1, 1e-3});
  }
  SUBCASE("softmax") {
    check_primitive(
        {{{2, 4}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::softmax(l[0])); }, -2, 2});
  }
  SUBCASE("layer_norm") {
    check_primitive(
        {{{2, 5}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::layer_norm(l[0])); }, -2, 2});
  }
  SUBCASE("sum") {
    check_primitive({{{3, 3}}, [](Tape&, std::vector<Tensor>& l) { return ad::sum(l[0]); }});
  }
  SUBCASE("mean") {
    check_primitive({{{3, 3}}, [](Tape&, std::vector<Tensor>& l) { return ad::mean(l[0]); }});
  }
  SUBCASE("abs") {
    check_primitive({{{2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::abs(l[0])); },
                     -1, 1, 1e-3});
  }
  SUBCASE("log") {
    check_primitive(
        {{{2, 3}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::log(l[0])); }, 0.1, 2.0});
  }
  SUBCASE("pow") {
    check_primitive(
        {{{2, 3}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::pow(l[0], 2.5)); }, 0.1,
         2.0});
  }
  SUBCASE("minimum") {
    check_primitive({{{2, 3}, {2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::minimum(l[0], l[1])); }});
  }
  SUBCASE("maximum") {
    check_primitive({{{2, 3}, {2, 3}},
                     [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::maximum(l[0], l[1])); }});
  }
  SUBCASE("concat") {
    check_primitive({{{2, 2}, {2, 3}}, [&](Tape& t, std::vector<Tensor>& l) {
                       return weighted_sum(t, ad::concat({l[0], l[1]}, 1));
                     }});
  }
  SUBCASE("slice") {
    check_primitive(
        {{{3, 4}}, [&](Tape& t, std::vector<Tensor>& l) { return weighted_sum(t, ad::slice(l[0], 1, 1, 3)); }});
  }
  SUBCASE("gather_rows") {
    check_primitive({{{4, 3}}, [&](Tape& t, std::vector<Tensor>& l) {
                       return weighted_sum(t, ad::gather_rows(l[0], {2, 0, 2}));
                     }});
  }
}

TEST_CASE("random three-layer composition matches finite differences") {
  
  GradCase c{{{3, 4}, {4, 4}, {4}},
             [&](Tape& t, std::vector<Tensor>& l) {
               Tensor h1 = ad::relu(ad::add(ad::matmul(l[0], l[1]), l[2]));
               Tensor h2 = ad::layer_norm(h1);
               Tensor h3 = ad::sigmoid(ad::matmul(h2, ad::transpose(l[1])));
               return weighted_sum(t, h3);
             },
             -1.0, 1.0, 1e-3};
  Rng rng(31);
  double worst = 0.0;
  for (int r = 0; r < 20; ++r) worst = std::max(worst, run_grad_case(c, rng));
  CHECK(worst < 1e-4);
}

TEST_CASE("detach cuts the tape and values are immutable") {
  Tape tape;
  Tensor x = tape.leaf({2}, {1.0, 2.0});
  Tensor d = ad::detach(ad::mul(x, x));
  CHECK_FALSE(d.recorded());
  Tensor root = ad::sum(ad::mul(x, d));
  tape.backward(root);
  CHECK(tape.grad(x) == std::vector<double>{1.0, 4.0});  // only the direct factor, not through d

  // Ops never mutate their operands.
  CHECK(x.values() == std::vector<double>{1.0, 2.0});
}

TEST_CASE("slice and concat round-trip") {
  Tensor x = Tensor::constant({2, 5}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto parts = std::vector<Tensor>{ad::slice(x, 1, 0, 2), ad::slice(x, 1, 2, 5)};
  CHECK(ad::concat(parts, 1).values() == x.values());
  CHECK(ad::slice(x, 0, 1, 2).values() == std::vector<double>{5, 6, 7, 8, 9});
  CHECK_THROWS_AS(ad::slice(x, 1, 3, 2), std::invalid_argument);
}

TEST_CASE("clamp keeps values in range and passes gradients inside it") {
  Tape tape;
  Tensor x = tape.leaf({4}, {-0.5, 0.25, 0.75, 1.5});
  Tensor y = ad::clamp(x, 0.0, 1.0);
  CHECK(y.values() == std::vector<double>{0.0, 0.25, 0.75, 1.0});
  tape.backward(ad::sum(y));
  CHECK(tape.grad(x) == std::vector<double>{0.0, 1.0, 1.0, 0.0});
}
