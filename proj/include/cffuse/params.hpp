#pragma once

#include <map>
#include <string>
#include <vector>

#include "cffuse/rng.hpp"
#include "cffuse/tensor.hpp"

namespace cffuse {

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Owns the trainable tensors of one model, in registration order.
class ParamStore {
 public:
  /// Registers a leaf tensor under a unique dotted name and returns a
  /// handle sharing its storage.
  Tensor add(const std::string& name, Tensor value);
  /// Kaiming-uniform init with the given fan-in: U(-b, b), b = sqrt(6 / fan_in).
  Tensor add_kaiming(const std::string& name, Shape dims, std::size_t fan_in, Rng& rng);
  Tensor add_constant(const std::string& name, Shape dims, double value);

  const std::vector<Parameter>& params() const { return params_; }
  std::vector<Parameter>& params() { return params_; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  std::size_t total_size() const;

  void zero_grad();

  std::map<std::string, Tensor> snapshot() const;
  /// Copies values by name; throws listing missing and unexpected names
  /// when the key sets differ or shapes disagree.
  void load(const std::map<std::string, Tensor>& values);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct SgdConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}

  /// Throws std::logic_error if any parameter has no gradient.
  void step(ParamStore& store);
  void step(std::vector<Parameter>& params);

  const SgdConfig& config() const { return cfg_; }
  SgdConfig& config() { return cfg_; }
  const std::map<std::string, std::vector<double>>& velocity() const { return velocity_; }
  void set_velocity(std::map<std::string, std::vector<double>> v) { velocity_ = std::move(v); }

 private:
  SgdConfig cfg_;
  std::map<std::string, std::vector<double>> velocity_;
};

}  // namespace cffuse
