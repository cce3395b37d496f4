#include "mdsse/filter.hpp"

#include <stdexcept>

namespace mdsse {

namespace {

void check_dims(const char* who, const Tensor& t, int64_t d) {
  if (t.size() != d) {
    throw std::invalid_argument(std::string(who) + ": expected " +
                                std::to_string(d) + " entries, got shape " +
                                shape_str(t.shape()));
  }
}

}  // namespace

GaussianBelief predict(const GaussianBelief& belief, const Tensor& a,
                       const Tensor& b, const Tensor& q, const Tensor& x) {
  int64_t d = belief.mean.size();
  check_dims("predict(a)", a, d);
  check_dims("predict(b)", b, d);
  check_dims("predict(q)", q, d);
  check_dims("predict(x)", x, d);
  check_dims("predict(var)", belief.var, d);
  GaussianBelief out;
  out.mean = add(mul(a, belief.mean), mul(b, x));
  out.var = add(mul(square(a), belief.var), q);
  return out;
}

GaussianBelief update(const GaussianBelief& prior, const Tensor& x,
                      const Tensor& r) {
  int64_t d = prior.mean.size();
  check_dims("update(x)", x, d);
  check_dims("update(r)", r, d);
  Tensor denom = add(prior.var, r);
  for (double v : denom.values()) {
    if (!(v > 0.0)) {
      throw std::runtime_error("update: prior variance + noise must be > 0, got " +
                               std::to_string(v));
    }
  }
  Tensor k = div(prior.var, denom);
  GaussianBelief out;
  out.mean = add(prior.mean, mul(k, sub(x, prior.mean)));
  out.var = mul(sub(Tensor::scalar(1.0), k), prior.var);
  return out;
}

FilterResult filter_sequence(const Tensor& xs, const Tensor& a,
                             const Tensor& b, const Tensor& q, const Tensor& r,
                             const GaussianBelief& belief0,
                             const std::vector<bool>& update_mask) {
  if (xs.rank() != 2) {
    throw std::invalid_argument("filter_sequence: xs must be [L,d]");
  }
  int64_t L = xs.dim(0), d = xs.dim(1);
  auto check_seq = [&](const char* who, const Tensor& t) {
    if (t.rank() != 2 || t.dim(0) != L || t.dim(1) != d) {
      throw std::invalid_argument(std::string("filter_sequence: ") + who +
                                  " must be [" + std::to_string(L) + "," +
                                  std::to_string(d) + "], got " +
                                  shape_str(t.shape()));
    }
  };
  check_seq("a", a);
  check_seq("b", b);
  check_seq("q", q);
  check_dims("filter_sequence(r)", r, d);
  if (!update_mask.empty() && update_mask.size() != static_cast<size_t>(L)) {
    throw std::invalid_argument("filter_sequence: update_mask length mismatch");
  }

  GaussianBelief belief;
  belief.mean = belief0.mean.defined() ? belief0.mean : Tensor::zeros({d});
  belief.var = belief0.var.defined() ? belief0.var : Tensor::full({d}, 1.0);
  check_dims("filter_sequence(mean0)", belief.mean, d);
  check_dims("filter_sequence(var0)", belief.var, d);

  FilterResult res;
  res.priors.reserve(static_cast<size_t>(L));
  res.posteriors.reserve(static_cast<size_t>(L));
  for (int64_t t = 0; t < L; ++t) {
    Tensor xt = row(xs, t);
    GaussianBelief prior =
        predict(belief, row(a, t), row(b, t), row(q, t), xt);
    res.priors.push_back(prior);
    bool do_update = update_mask.empty() || update_mask[static_cast<size_t>(t)];
    belief = do_update ? update(prior, xt, r) : prior;
    res.posteriors.push_back(belief);
  }
  return res;
}

}  // namespace mdsse
