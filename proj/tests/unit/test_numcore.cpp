#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "conglude/autograd.hpp"
#include "conglude/config.hpp"
#include "conglude/errors.hpp"
#include "conglude/mlp.hpp"
#include "conglude/optim.hpp"
#include "conglude/params.hpp"
#include "test_support.hpp"

using namespace conglude;
using conglude::testing::check_gradients;
using conglude::testing::named;
using conglude::testing::random_matrix;

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK(Tensor::row({1, 2, 3}).rows() == 1);
  Tensor bad = Tensor::row({1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_FALSE(bad.all_finite());
}

TEST_CASE("backward of sum of squares") {
  Var x = Var::parameter(Tensor::row({1.0, 2.0}), "x");
  backward(sum_all(square(x)));
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("constant loss leaves zero gradient") {
  Var x = Var::parameter(Tensor::row({1.0, 2.0}), "x");
  Var c = add_scalar(scale(sum_all(x), 0.0), 3.0);
  backward(c);
  CHECK(c.item() == 3.0);
  for (double g : x.grad().values()) CHECK(g == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Var x = Var::parameter(Tensor::row({1.0, 2.0}), "x");
  CHECK_THROWS_AS(backward(square(x)), ContractError);
}

TEST_CASE("no-grad guard records nothing") {
  Var x = Var::parameter(Tensor::row({1.0}), "x");
  {
    NoGradGuard g;
    CHECK_FALSE(grad_enabled());
    Var y = square(x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(grad_enabled());
}

TEST_CASE("finite differences for every differentiable op") {
  std::mt19937_64 rng(11);
  Var a = Var::parameter(random_matrix(3, 4, rng), "a");
  Var b = Var::parameter(random_matrix(3, 4, rng), "b");
  Var w = Var::parameter(random_matrix(4, 2, rng), "w");
  Var bias = Var::parameter(random_matrix(1, 2, rng), "bias");
  Var col = Var::parameter(random_matrix(3, 1, rng), "col");
  Tensor pos = random_matrix(3, 1, rng);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = 1.0 + std::abs(pos[i]);
  Var poscol = Var::parameter(pos, "poscol");
  const std::vector<std::size_t> seg{0, 1, 0};

  struct Case {
    const char* name;
    std::function<Var()> f;
  };
  const std::vector<Case> cases{
      {"matmul", [&] { return sum_all(square(matmul(a, w))); }},
      {"matmul_bt", [&] { return sum_all(square(matmul_bt(a, b))); }},
      {"add/sub/mul", [&] { return sum_all(mul(add(a, b), sub(a, b))); }},
      {"linear", [&] { return sum_all(square(linear(a, w, bias))); }},
      {"add_row", [&] { return sum_all(square(add_row(matmul(a, w), bias))); }},
      {"mul_col", [&] { return sum_all(square(mul_col(a, col))); }},
      {"div_col", [&] { return sum_all(square(div_col(a, poscol))); }},
      {"silu", [&] { return sum_all(activation(a, Activation::SiLU)); }},
      {"gelu", [&] { return sum_all(activation(a, Activation::GELU)); }},
      {"sigmoid", [&] { return sum_all(activation(a, Activation::Sigmoid)); }},
      {"tanh", [&] { return sum_all(activation(a, Activation::Tanh)); }},
      {"log", [&] { return sum_all(log(poscol)); }},
      {"softplus", [&] { return sum_all(softplus(a)); }},
      {"concat", [&] { return sum_all(square(concat_rows({concat_cols({a, b}), concat_cols({b, a})}))); }},
      {"slices", [&] { return sum_all(square(slice_cols(slice_rows(a, 1, 3), 1, 3))); }},
      {"gather", [&] { return sum_all(square(gather_rows(a, {2, 0, 2}))); }},
      {"broadcast", [&] { return sum_all(square(broadcast_rows(bias, 4))); }},
      {"segment_mean", [&] { return sum_all(square(segment_mean(a, seg, 3))); }},
      {"mean_rows/mean_all", [&] { return add(sum_all(square(mean_rows(a))), mean_all(b)); }},
      {"row_norm", [&] { return sum_all(row_norm(a)); }},
      {"row_sq_norm", [&] { return sum_all(row_sq_norm(a)); }},
      {"normalize_rows", [&] { return sum_all(mul(normalize_rows(a), b)); }},
      {"pick", [&] { return pick(a, 1, 2); }},
      {"logsumexp", [&] { return logsumexp_row(slice_rows(a, 0, 1)); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto r = check_gradients(named({a, b, w, bias, col, poscol}), c.f);
    CAPTURE(r.worst);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("row_norm gradient at a zero row is zero") {
  Var x = Var::parameter(Tensor::matrix(1, 3, 0.0), "x");
  backward(sum_all(row_norm(x)));
  for (double g : x.grad().values()) CHECK(g == 0.0);
  CHECK_THROWS_AS(normalize_rows(Var::constant(Tensor::matrix(1, 3, 0.0))), ContractError);
}

TEST_CASE("logsumexp is stable for large inputs") {
  Var x = Var::constant(Tensor::row({1000.0, 1000.0}));
  CHECK(logsumexp_row(x).item() == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("mlp examples") {
  ParamSet ps;
  ps.add("m.l0.weight", Tensor::from_rows({{2.0}}));
  ps.add("m.l0.bias", Tensor::row({1.0}));
  MlpSpec spec{{1, 1}, Activation::Identity, Activation::Identity, {}, 1.0};
  Mlp mlp(spec, "m", ps);
  CHECK(mlp.forward(Var::constant(Tensor::row({3.0}))).item() == 7.0);

  CHECK(activate(Activation::SiLU, 0.0) == 0.0);

  ParamSet zeros;
  std::mt19937_64 rng(1);
  MlpSpec spec2{{3, 5, 2}, Activation::Identity, Activation::Identity, {}, 1.0};
  Mlp z(spec2, "z", zeros, rng);
  for (auto& [name, v] : zeros.entries()) {
    Var copy = v;
    copy.mutable_value().fill(0.0);
  }
  const Tensor out = z.forward(Var::constant(random_matrix(4, 3, rng))).value();
  for (double v : out.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(z.forward(Var::constant(Tensor::matrix(1, 4))), ShapeError);
}

TEST_CASE("mlp forward is deterministic given seed and mode") {
  ParamSet ps;
  std::mt19937_64 init(3);
  MlpSpec spec{{6, 8, 4}, Activation::GELU, Activation::Identity, {0.1, 0.5}, 1.0};
  Mlp mlp(spec, "m", ps, init);
  std::mt19937_64 data_rng(4);
  Var x = Var::constant(random_matrix(5, 6, data_rng));
  std::mt19937_64 r1(9), r2(9);
  CHECK(mlp.forward(x, true, &r1).value() == mlp.forward(x, true, &r2).value());
  CHECK(mlp.forward(x).value() == mlp.forward(x).value());
}

TEST_CASE("inverted dropout preserves the expectation") {
  const double rate = 0.3;
  const std::size_t samples = 10000;
  Var x = Var::constant(Tensor::row({1.0, -2.0, 0.5}));
  std::mt19937_64 rng(5);
  std::vector<double> sum(3, 0.0), sq(3, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const Tensor y = dropout(x, rate, true, &rng).value();
    for (std::size_t k = 0; k < 3; ++k) {
      sum[k] += y[k];
      sq[k] += y[k] * y[k];
    }
  }
  for (std::size_t k = 0; k < 3; ++k) {
    const double mean = sum[k] / samples;
    const double var = sq[k] / samples - mean * mean;
    const double se = std::sqrt(var / samples);
    CHECK(std::abs(mean - x.value()[k]) < 3.0 * se);
  }
  CHECK(dropout(x, rate, false, nullptr).value() == x.value());
}

TEST_CASE("adamw: zero gradient without decay leaves parameters") {
  ParamSet ps;
  ps.add("w", Tensor::row({1.0, -2.0}));
  AdamW opt;
  opt.step(ps, 1e-3);
  CHECK(ps.at("w").value() == Tensor::row({1.0, -2.0}));
  CHECK(opt.step_count() == 1);
  REQUIRE(opt.moments("w") != nullptr);
  CHECK(opt.moments("w")->updates == 1);
}

TEST_CASE("adamw: first step moves by -lr * g / (|g| + eps)") {
  ParamSet ps;
  Var w = ps.add("w", Tensor::row({0.5, 0.5, 0.5}));
  backward(sum_all(mul(w, Var::constant(Tensor::row({3.0, -0.2, 1e-3})))));
  AdamW opt;
  const double lr = 0.01;
  opt.step(ps, lr);
  // m_hat = g, v_hat = g^2 at t = 1
  const double g[3] = {3.0, -0.2, 1e-3};
  for (int i = 0; i < 3; ++i) {
    const double expect = 0.5 - lr * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(ps.at("w").value()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("adamw: weight decay with zero gradient shrinks by (1 - lr*lambda)") {
  ParamSet ps;
  ps.add("w", Tensor::row({2.0, -4.0}));
  AdamWOptions o;
  o.weight_decay = 0.1;
  AdamW opt(o);
  opt.step(ps, 0.5);
  CHECK(ps.at("w").value()[0] == doctest::Approx(2.0 * (1 - 0.05)));
  CHECK(ps.at("w").value()[1] == doctest::Approx(-4.0 * (1 - 0.05)));
}

TEST_CASE("adamw: NaN gradient aborts naming the parameter") {
  ParamSet ps;
  Var a = ps.add("good", Tensor::row({1.0}));
  Var b = ps.add("bad", Tensor::row({1.0}));
  backward(add(sum_all(a), sum_all(scale(b, std::numeric_limits<double>::quiet_NaN()))));
  AdamW opt;
  try {
    opt.step(ps, 1e-3);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
  CHECK(ps.at("good").value()[0] == 1.0);
}

TEST_CASE("adamw: selection skips frozen parameters") {
  ParamSet ps;
  Var a = ps.add("train.a", Tensor::row({1.0}));
  Var b = ps.add("frozen.b", Tensor::row({1.0}));
  backward(add(sum_all(a), sum_all(b)));
  AdamW opt;
  opt.step(ps, 0.1, [](const std::string& n) { return n.starts_with("train."); });
  CHECK(ps.at("train.a").value()[0] != 1.0);
  CHECK(ps.at("frozen.b").value()[0] == 1.0);
  CHECK(opt.moments("frozen.b") == nullptr);
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::mt19937_64 rng(2);
  Checkpoint c;
  c.params.add("a.weight", random_matrix(3, 5, rng));
  c.params.add("a.bias", random_matrix(1, 5, rng));
  c.params.add("tiny", Tensor::row({std::numeric_limits<double>::denorm_min(), -0.0, 1e308}));
  c.meta["n"] = 8;
  std::stringstream ss;
  write_checkpoint(ss, c);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "CGCK");
  const Checkpoint back = read_checkpoint(ss);
  REQUIRE(back.params.size() == 3);
  for (const auto& [name, v] : c.params.entries()) {
    const Tensor& t = back.params.at(name).value();
    CHECK(t.shape() == v.value().shape());
    CHECK(std::memcmp(t.storage().data(), v.value().storage().data(), t.size() * sizeof(double)) == 0);
  }
  CHECK(back.meta.at("n") == 8);
  CHECK(back.params.sha256() == c.params.sha256());
  std::stringstream again;
  write_checkpoint(again, back);
  CHECK(again.str() == bytes);
}

TEST_CASE("checkpoint version mismatch and bad magic are format errors") {
  Checkpoint c;
  c.params.add("x", Tensor::row({1.0}));
  std::stringstream ss;
  write_checkpoint(ss, c);
  std::string bytes = ss.str();
  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  std::stringstream a(wrong_version);
  CHECK_THROWS_AS(read_checkpoint(a), FormatError);
  std::string wrong_magic = bytes;
  wrong_magic[0] = 'X';
  std::stringstream b(wrong_magic);
  CHECK_THROWS_AS(read_checkpoint(b), FormatError);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(truncated), FormatError);
}

TEST_CASE("parameter hash sees any bit change") {
  ParamSet ps;
  Var w = ps.add("w", Tensor::row({1.0, 2.0}));
  const auto h0 = ps.sha256();
  CHECK(h0.size() == 64);
  w.mutable_value()[1] = std::nextafter(2.0, 3.0);
  CHECK(ps.sha256() != h0);
}

TEST_CASE("key-value config parsing") {
  const auto kv = KeyValueConfig::parse("# comment\nlr = 0.01  # trailing\nname = \"a # b\"\nflag = true\n");
  CHECK(kv.get_double("lr", 0) == 0.01);
  CHECK(kv.get_string("name", "") == "a # b");
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_size("missing", 7) == 7);
  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), FormatError);
  CHECK_THROWS_AS(KeyValueConfig::parse("just text\n"), FormatError);
  CHECK_THROWS_AS(KeyValueConfig::parse("n = -3\n").get_size("n", 0), FormatError);
  CHECK_THROWS_AS(kv.require_known({"lr"}), FormatError);
}
