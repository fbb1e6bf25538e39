#include "mvs/gradcheck.h"

#include <cmath>

#include "mvs/errors.h"
#include "mvs/op_checks.h"

namespace mvs {

namespace {

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

double eval_scalar(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                   const std::vector<Tensor>& inputs) {
  Tensor out = f(inputs);
  if (out.numel() != 1) throw DataError("gradcheck: f must return a scalar");
  double v = out.scalar_value();
  if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite intermediate");
  return v;
}

}  // namespace

GradCheckReport gradcheck(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double h, size_t max_coords_per_input,
    std::mt19937_64* rng) {
  Tensor out = f(inputs);
  if (out.numel() != 1) throw DataError("gradcheck: f must return a scalar");
  if (!std::isfinite(out.scalar_value())) {
    throw NumericError("gradcheck: non-finite output");
  }
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const auto& in : inputs) {
    analytic.push_back(in.has_grad() ? in.grad()
                                     : std::vector<double>(in.numel(), 0.0));
  }

  GradCheckReport rep;
  for (size_t i = 0; i < inputs.size(); ++i) {
    size_t n = inputs[i].numel();
    std::vector<size_t> coords;
    if (max_coords_per_input > 0 && max_coords_per_input < n) {
      if (rng == nullptr) throw DataError("gradcheck: rng required for coord subset");
      std::uniform_int_distribution<size_t> pick(0, n - 1);
      for (size_t k = 0; k < max_coords_per_input; ++k) coords.push_back(pick(*rng));
    } else {
      coords.resize(n);
      for (size_t k = 0; k < n; ++k) coords[k] = k;
    }

    for (size_t j : coords) {
      std::vector<Tensor> probe = inputs;
      std::vector<double> data = inputs[i].data();
      double orig = data[j];
      data[j] = orig + h;
      probe[i] = Tensor::from_data(inputs[i].shape(), data, false);
      double fp = eval_scalar(f, probe);
      data[j] = orig - h;
      probe[i] = Tensor::from_data(inputs[i].shape(), data, false);
      double fm = eval_scalar(f, probe);
      double numeric = (fp - fm) / (2.0 * h);
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic[i][j], numeric));
      ++rep.coords_checked;
    }
  }
  return rep;
}

// ---- named per-op checks ---------------------------------------------------

namespace {

Tensor rand_t(const Shape& shape, double lo, double hi, std::mt19937_64& rng,
              bool grad = true) {
  return Tensor::uniform(shape, lo, hi, rng, grad);
}

// Push values away from a kink at `where` so central differences stay on one
// side of it.
Tensor nudged(const Shape& shape, double lo, double hi, double where,
              double margin, std::mt19937_64& rng) {
  std::vector<double> data(shape_numel(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : data) {
    v = dist(rng);
    if (std::abs(v - where) < margin) v = where + (v >= where ? margin : -margin);
  }
  return Tensor::from_data(shape, std::move(data), true);
}

// Reduce an op output to a scalar through fixed random weights so every
// output coordinate contributes to the checked gradient.
std::function<Tensor(const Tensor&)> make_probe(const Shape& out_shape,
                                                std::mt19937_64& rng) {
  Tensor w = Tensor::uniform(out_shape, -1.0, 1.0, rng);
  return [w](const Tensor& t) { return sum(mul(t, w)); };
}

GradCheckReport check_binary(uint64_t seed, const std::string& kind) {
  std::mt19937_64 rng(seed * 7919 + 13);
  Shape sa{3, 4}, sb{4};
  Tensor a = rand_t(sa, -2.0, 2.0, rng);
  Tensor b;
  if (kind == "div") {
    // keep denominators away from zero
    Tensor mag = rand_t(sb, 0.5, 2.0, rng);
    std::vector<double> d = mag.data();
    std::uniform_real_distribution<double> flip(0.0, 1.0);
    for (double& v : d) {
      if (flip(rng) < 0.5) v = -v;
    }
    b = Tensor::from_data(sb, d, true);
  } else {
    b = rand_t(sb, -2.0, 2.0, rng);
  }
  auto probe = make_probe(sa, rng);
  auto f = [kind, probe](const std::vector<Tensor>& in) {
    Tensor r;
    if (kind == "add") r = add(in[0], in[1]);
    else if (kind == "sub") r = sub(in[0], in[1]);
    else if (kind == "mul") r = mul(in[0], in[1]);
    else r = div(in[0], in[1]);
    return probe(r);
  };
  return gradcheck(f, {a, b});
}

GradCheckReport check_unary(uint64_t seed, const std::string& kind) {
  std::mt19937_64 rng(seed * 104729 + 7);
  Shape s{2, 5};
  Tensor a;
  if (kind == "log") a = rand_t(s, 0.1, 3.0, rng);
  else if (kind == "relu") a = nudged(s, -1.0, 1.0, 0.0, 0.05, rng);
  else a = rand_t(s, -2.0, 2.0, rng);
  auto probe = make_probe(s, rng);
  auto f = [kind, probe](const std::vector<Tensor>& in) {
    Tensor r;
    if (kind == "neg") r = neg(in[0]);
    else if (kind == "log") r = log(in[0]);
    else if (kind == "exp") r = exp(in[0]);
    else if (kind == "pow2") r = square(in[0]);
    else r = relu(in[0]);
    return probe(r);
  };
  return gradcheck(f, {a});
}

GradCheckReport check_clamp(uint64_t seed) {
  std::mt19937_64 rng(seed * 39916801 + 3);
  Shape s{2, 5};
  std::vector<double> data(shape_numel(s));
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& v : data) {
    v = dist(rng);
    for (double k : {-0.5, 0.5}) {
      if (std::abs(v - k) < 0.05) v = k + (v >= k ? 0.05 : -0.05);
    }
  }
  Tensor a = Tensor::from_data(s, data, true);
  auto probe = make_probe(s, rng);
  auto f = [probe](const std::vector<Tensor>& in) {
    return probe(clamp(in[0], -0.5, 0.5));
  };
  return gradcheck(f, {a});
}

GradCheckReport check_reduce(uint64_t seed, const std::string& kind) {
  std::mt19937_64 rng(seed * 15485863 + 11);
  Shape s{2, 3, 4};
  Tensor a = rand_t(s, -2.0, 2.0, rng);
  if (kind == "sum") {
    auto probe = make_probe({2, 4}, rng);
    auto f = [probe](const std::vector<Tensor>& in) {
      return probe(sum(in[0], {1}));
    };
    return gradcheck(f, {a});
  }
  if (kind == "mean") {
    auto probe = make_probe({3}, rng);
    auto f = [probe](const std::vector<Tensor>& in) {
      return probe(mean(in[0], {0, 2}));
    };
    return gradcheck(f, {a});
  }
  // max-with-argmax: values path only; continuous random input, ties have
  // probability zero.
  auto probe = make_probe({2, 4}, rng);
  auto f = [probe](const std::vector<Tensor>& in) {
    return probe(max_along(in[0], 1).values);
  };
  return gradcheck(f, {a});
}

GradCheckReport check_softmax(uint64_t seed) {
  std::mt19937_64 rng(seed * 2654435761u + 17);
  Tensor a = rand_t({5}, -2.0, 2.0, rng);
  auto probe = make_probe({5}, rng);
  auto f = [probe](const std::vector<Tensor>& in) {
    return probe(softmax(in[0], 0));
  };
  return gradcheck(f, {a});
}

GradCheckReport check_conv2d(uint64_t seed, size_t stride) {
  std::mt19937_64 rng(seed * 538639 + 29);
  Tensor input = rand_t({1, 5, 5}, -1.0, 1.0, rng);
  Tensor kernels = rand_t({2, 1, 3, 3}, -1.0, 1.0, rng);
  Tensor bias = rand_t({2}, -0.5, 0.5, rng);
  size_t oh = (5 + 2 - 3) / stride + 1;
  auto probe = make_probe({2, oh, oh}, rng);
  auto f = [probe, stride](const std::vector<Tensor>& in) {
    return probe(conv2d(in[0], in[1], in[2], stride, 1));
  };
  return gradcheck(f, {input, kernels, bias});
}

GradCheckReport check_conv3d(uint64_t seed) {
  std::mt19937_64 rng(seed * 6700417 + 31);
  Tensor input = rand_t({2, 3, 4, 4}, -1.0, 1.0, rng);
  Tensor kernels = rand_t({2, 2, 3, 3, 3}, -1.0, 1.0, rng);
  Tensor bias = rand_t({2}, -0.5, 0.5, rng);
  auto probe = make_probe({2, 3, 4, 4}, rng);
  auto f = [probe](const std::vector<Tensor>& in) {
    return probe(conv3d(in[0], in[1], in[2], 1));
  };
  return gradcheck(f, {input, kernels, bias});
}

GradCheckReport check_broadcast(uint64_t seed) {
  std::mt19937_64 rng(seed * 97 + 41);
  Tensor a = rand_t({3, 1}, -2.0, 2.0, rng);
  auto probe = make_probe({2, 3, 4}, rng);
  auto f = [probe](const std::vector<Tensor>& in) {
    return probe(broadcast_to(in[0], {2, 3, 4}));
  };
  return gradcheck(f, {a});
}

GradCheckReport check_gather(uint64_t seed) {
  std::mt19937_64 rng(seed * 193 + 43);
  Tensor a = rand_t({4, 3, 3}, -1.0, 1.0, rng);
  std::uniform_int_distribution<size_t> pick(0, 3);
  std::vector<size_t> idx(9);
  for (auto& v : idx) v = pick(rng);
  auto probe = make_probe({3, 3}, rng);
  auto f = [probe, idx](const std::vector<Tensor>& in) {
    return probe(gather_along0(in[0], idx));
  };
  return gradcheck(f, {a});
}

GradCheckReport check_window_sum(uint64_t seed) {
  std::mt19937_64 rng(seed * 389 + 47);
  Tensor a = rand_t({6, 2, 3}, -1.0, 1.0, rng);
  std::uniform_int_distribution<size_t> pick(0, 3);  // window 3 fits
  std::vector<size_t> start(6);
  for (auto& v : start) v = pick(rng);
  auto probe = make_probe({2, 3}, rng);
  auto f = [probe, start](const std::vector<Tensor>& in) {
    return probe(window_sum_along0(in[0], start, 3));
  };
  return gradcheck(f, {a});
}

GradCheckReport check_upsample(uint64_t seed, const std::string& kind) {
  std::mt19937_64 rng(seed * 769 + 53);
  Tensor a = rand_t({2, 3, 4}, -1.0, 1.0, rng);
  if (kind == "nearest") {
    auto probe = make_probe({2, 6, 8}, rng);
    auto f = [probe](const std::vector<Tensor>& in) {
      return probe(upsample_nearest2x(in[0]));
    };
    return gradcheck(f, {a});
  }
  auto probe = make_probe({2, 5, 7}, rng);
  auto f = [probe](const std::vector<Tensor>& in) {
    return probe(upsample_bilinear(in[0], 5, 7));
  };
  return gradcheck(f, {a});
}

std::vector<OpCheck> build_registry();

const std::vector<OpCheck>& registry() {
  static const std::vector<OpCheck> reg = build_registry();
  return reg;
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> names;
  for (const auto& c : registry()) names.push_back(c.name);
  return names;
}

OpCheckResult run_gradcheck_op(const std::string& name, size_t seeds) {
  for (const auto& c : registry()) {
    if (c.name == name) {
      OpCheckResult res;
      res.name = name;
      res.tolerance = c.tol;
      for (uint64_t s = 1; s <= seeds; ++s) {
        GradCheckReport rep = c.fn(s);
        res.max_rel_err = std::max(res.max_rel_err, rep.max_rel_err);
      }
      res.pass = res.max_rel_err <= c.tol;
      return res;
    }
  }
  throw DataError("gradcheck: unknown op '" + name + "'");
}

std::vector<OpCheckResult> run_all_gradchecks(size_t seeds) {
  std::vector<OpCheckResult> out;
  for (const auto& c : registry()) out.push_back(run_gradcheck_op(c.name, seeds));
  return out;
}

namespace {

std::vector<OpCheck> build_registry() {
  std::vector<OpCheck> reg;
  auto bin = [](const char* k) {
    return [k](uint64_t s) { return check_binary(s, k); };
  };
  auto una = [](const char* k) {
    return [k](uint64_t s) { return check_unary(s, k); };
  };
  reg.push_back({"add", 1e-6, bin("add")});
  reg.push_back({"sub", 1e-6, bin("sub")});
  reg.push_back({"mul", 1e-6, bin("mul")});
  reg.push_back({"div", 1e-5, bin("div")});
  reg.push_back({"neg", 1e-6, una("neg")});
  reg.push_back({"log", 1e-5, una("log")});
  reg.push_back({"exp", 1e-5, una("exp")});
  reg.push_back({"pow2", 1e-6, una("pow2")});
  reg.push_back({"relu", 1e-6, una("relu")});
  reg.push_back({"clamp", 1e-6, [](uint64_t s) { return check_clamp(s); }});
  reg.push_back({"sum", 1e-6, [](uint64_t s) { return check_reduce(s, "sum"); }});
  reg.push_back({"mean", 1e-6, [](uint64_t s) { return check_reduce(s, "mean"); }});
  reg.push_back({"max", 1e-6, [](uint64_t s) { return check_reduce(s, "max"); }});
  reg.push_back({"softmax", 1e-6, [](uint64_t s) { return check_softmax(s); }});
  reg.push_back({"conv2d", 1e-6, [](uint64_t s) { return check_conv2d(s, 1); }});
  reg.push_back({"conv2d_stride2", 1e-6, [](uint64_t s) { return check_conv2d(s, 2); }});
  reg.push_back({"conv3d", 1e-6, [](uint64_t s) { return check_conv3d(s); }});
  reg.push_back({"broadcast", 1e-6, [](uint64_t s) { return check_broadcast(s); }});
  reg.push_back({"gather", 1e-6, [](uint64_t s) { return check_gather(s); }});
  reg.push_back({"window_sum", 1e-6, [](uint64_t s) { return check_window_sum(s); }});
  reg.push_back({"upsample_nearest", 1e-6,
                 [](uint64_t s) { return check_upsample(s, "nearest"); }});
  reg.push_back({"upsample_bilinear", 1e-6,
                 [](uint64_t s) { return check_upsample(s, "bilinear"); }});
  for (const auto& extra : pipeline_gradchecks()) reg.push_back(extra);
  return reg;
}

}  // namespace

}  // namespace mvs
