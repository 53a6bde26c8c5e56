// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ddr/network.hpp"
#include "ddr/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace ddr {

// Value-level view of a quantile/CDF pair in standardized units: Q(τ,x) and
// the log-odds η(ỹ,x) with F = σ(η). Loss references, inference and metrics
// are written against this interface so that hand-built analytic pairs and
// trained networks go through the same code.
class DistributionHeads {
 public:
  virtual ~DistributionHeads() = default;

  // One τ / ỹ per row of x. No range check on τ: composed evaluations feed
  // F outputs straight back in.
  virtual std::vector<double> quantile(std::span<const double> tau, const Tensor2& x) const = 0;
  virtual std::vector<double> log_odds(std::span<const double> ytilde, const Tensor2& x) const = 0;
  virtual std::vector<double> median(const Tensor2& x) const;
  virtual bool has_cdf() const { return true; }

  std::vector<double> cdf(std::span<const double> ytilde, const Tensor2& x) const;
  std::vector<double> quantile(double tau, const Tensor2& x) const;
  std::vector<double> cdf(double ytilde, const Tensor2& x) const;
};

class ModelHeads final : public DistributionHeads {
 public:
  explicit ModelHeads(const DdrModel& model) : model_(&model) {}

  std::vector<double> quantile(std::span<const double> tau, const Tensor2& x) const override;
  std::vector<double> log_odds(std::span<const double> ytilde, const Tensor2& x) const override;
  std::vector<double> median(const Tensor2& x) const override;
  bool has_cdf() const override { return model_->arch().cdf_head; }
  using DistributionHeads::cdf;
  using DistributionHeads::quantile;

  const DdrModel& model() const noexcept { return *model_; }

 private:
  const DdrModel* model_;
};

// Analytic pair built from per-row scalar functions; used to rig exact
// inverses and known-slope models.
class FunctionHeads final : public DistributionHeads {
 public:
  using RowFn = std::function<double(double, std::span<const double>)>;

  FunctionHeads(RowFn quantile, RowFn log_odds, RowFn median = {})
      : quantile_(std::move(quantile)), log_odds_(std::move(log_odds)), median_(std::move(median)) {}

  std::vector<double> quantile(std::span<const double> tau, const Tensor2& x) const override;
  std::vector<double> log_odds(std::span<const double> ytilde, const Tensor2& x) const override;
  std::vector<double> median(const Tensor2& x) const override;
  bool has_cdf() const override { return static_cast<bool>(log_odds_); }
  using DistributionHeads::cdf;
  using DistributionHeads::quantile;

 private:
  RowFn quantile_;
  RowFn log_odds_;
  RowFn median_;
};

}  // namespace ddr
