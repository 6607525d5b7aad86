#pragma once

// Per-family fit/load entry points used by models::train and load_model.
// Labels are 0-based class indices.

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "empathy/matrix.hpp"
#include "empathy/models/model.hpp"

namespace empathy::models::detail {

struct FitContext {
  const nlohmann::json& hyperparameters;
  std::uint64_t seed;
  std::vector<std::string>& warnings;
};

std::shared_ptr<const Model> fit_logistic(const Matrix& x, std::span<const int> y, FitContext ctx);
std::shared_ptr<const Model> load_logistic(const nlohmann::json& params);

std::shared_ptr<const Model> fit_svc(const Matrix& x, std::span<const int> y, FitContext ctx);
std::shared_ptr<const Model> load_svc(const nlohmann::json& params);

std::shared_ptr<const Model> fit_tree(const Matrix& x, std::span<const int> y, FitContext ctx);
std::shared_ptr<const Model> load_tree(const nlohmann::json& params);

std::shared_ptr<const Model> fit_forest(const Matrix& x, std::span<const int> y, FitContext ctx);
std::shared_ptr<const Model> load_forest(const nlohmann::json& params);

std::shared_ptr<const Model> fit_mlp(const Matrix& x, std::span<const int> y, FitContext ctx);
std::shared_ptr<const Model> load_mlp(const nlohmann::json& params);

constexpr int kClasses = 3;

}  // namespace empathy::models::detail
