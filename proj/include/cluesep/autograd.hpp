// Copyright 2026 The cluesep Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cluesep/tensor.hpp"

namespace cluesep::num {

struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
  bool has_grad() const { return !grad.empty(); }
};

// Handle to a value on the gradient tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

  // Reverse sweep from a scalar (single element) root.
  void backward() const;

 private:
  std::shared_ptr<Node> node_;
};

// While alive, results record no tape (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active();

 private:
  bool previous_;
};

// Builds the result node of an op. Raises NumericError when the forward value
// is not finite. Inputs and the backward rule are kept only when some input
// needs a gradient.
Var make_result(Tensor value, std::vector<Var> inputs, const char* op, std::function<void(Node&)> backward);

// Trainable leaf.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  const std::string& name() const { return name_; }
  Var var() const { return Var(node_); }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const;
  Tensor& mutable_grad() { return node_->grad_buffer(); }
  const Shape& shape() const { return node_->value.shape(); }
  void zero_grad();

 private:
  std::string name_;
  std::shared_ptr<Node> node_;
};

// Ordered, name-unique collection of parameters.
class ParameterSet {
 public:
  // Uniform in +-sqrt(1/fan_in); the stream depends only on (seed, name), so
  // two models built from the same seed agree on every shared name.
  Parameter& add_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed);
  Parameter& add_constant(const std::string& name, Shape shape, double value);
  Parameter& add(Parameter p);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<Parameter> items_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace cluesep::num
