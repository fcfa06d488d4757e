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

#include "cluesep/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "cluesep/error.hpp"
#include "cluesep/rng.hpp"

namespace cluesep::num {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::backward() const {
  if (node_->value.size() != 1) {
    throw DimensionError("backward() needs a scalar root, got " + shape_str(node_->value.shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad()) n->backward(*n);
  }
}

namespace {
thread_local bool g_no_grad = false;
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

Var make_result(Tensor value, std::vector<Var> inputs, const char* op, std::function<void(Node&)> backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  if (!g_no_grad)
    for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

Parameter::Parameter(std::string name, Tensor value) : name_(std::move(name)), node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = true;
  node_->op = "parameter";
}

const Tensor& Parameter::grad() const { return node_->grad_buffer(); }

void Parameter::zero_grad() { node_->grad_buffer().fill(0.0); }

Parameter& ParameterSet::add_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(derive_seed(seed, {fnv1a(name)}));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in == 0 ? 1 : fan_in));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return add(Parameter(name, std::move(t)));
}

Parameter& ParameterSet::add_constant(const std::string& name, Shape shape, double value) {
  return add(Parameter(name, Tensor(std::move(shape), value)));
}

Parameter& ParameterSet::add(Parameter p) {
  if (contains(p.name())) throw ConfigError("duplicate parameter name '" + p.name() + "'");
  index_[p.name()] = items_.size();
  items_.push_back(std::move(p));
  return items_.back();
}

Parameter& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return items_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return items_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value().size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : items_) p.zero_grad();
}

}  // namespace cluesep::num
