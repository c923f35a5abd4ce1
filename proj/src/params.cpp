#include "cffuse/params.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace cffuse {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  index_.emplace(name, params_.size());
  params_.push_back({name, value});
  return value;
}

Tensor ParamStore::add_kaiming(const std::string& name, Shape dims, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> values(numel_of(dims));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return add(name, Tensor(std::move(dims), std::move(values)));
}

Tensor ParamStore::add_constant(const std::string& name, Shape dims, double value) {
  return add(name, Tensor::full(std::move(dims), value));
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return params_[it->second].tensor;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out.emplace(p.name, p.tensor.detach());
  return out;
}

void ParamStore::load(const std::map<std::string, Tensor>& values) {
  std::vector<std::string> missing, unexpected, mismatched;
  for (const auto& p : params_) {
    auto it = values.find(p.name);
    if (it == values.end()) {
      missing.push_back(p.name);
    } else if (it->second.dims() != p.tensor.dims()) {
      mismatched.push_back(p.name + " " + shape_str(it->second.dims()) + " vs " + shape_str(p.tensor.dims()));
    }
  }
  for (const auto& [name, t] : values) {
    if (!index_.count(name)) unexpected.push_back(name);
  }
  if (!missing.empty() || !unexpected.empty() || !mismatched.empty()) {
    std::ostringstream os;
    os << "parameter name mismatch.";
    auto list = [&os](const char* label, const std::vector<std::string>& names) {
      if (names.empty()) return;
      os << ' ' << label << ':';
      for (const auto& n : names) os << ' ' << n;
      os << '.';
    };
    list("missing", missing);
    list("unexpected", unexpected);
    list("shape", mismatched);
    throw std::invalid_argument(os.str());
  }
  for (auto& p : params_) {
    const auto src = values.at(p.name).data();
    auto dst = p.tensor.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
    p.tensor.zero_grad();
  }
}

void Sgd::step(ParamStore& store) { step(store.params()); }

void Sgd::step(std::vector<Parameter>& params) {
  for (auto& p : params) {
    if (!p.tensor.has_grad()) throw std::logic_error("sgd step: parameter " + p.name + " has no gradient");
  }
  for (auto& p : params) {
    auto& v = velocity_[p.name];
    auto values = p.tensor.mutable_data();
    if (v.size() != values.size()) v.assign(values.size(), 0.0);
    const auto g = p.tensor.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      v[i] = cfg_.momentum * v[i] + g[i] + cfg_.weight_decay * values[i];
      values[i] -= cfg_.lr * v[i];
    }
  }
}

}  // namespace cffuse
