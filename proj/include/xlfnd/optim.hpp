#pragma once

#include <cmath>
#include <vector>

#include "xlfnd/model.hpp"

namespace xlfnd::optim {

// Adam over one parameter set. Moments persist across epochs.
template <typename T>
class Adam {
 public:
  using Mat = autodiff::Matrix<T>;

  Adam() = default;
  Adam(const model::ParamSet<T>& shape, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& [_, m] : shape.blocks) {
      m_.push_back(Mat::Zero(m.rows(), m.cols()));
      v_.push_back(Mat::Zero(m.rows(), m.cols()));
    }
  }

  // Descends along `grads`.
  void step(model::ParamSet<T>& params, const std::vector<Mat>& grads) {
    if (grads.size() != params.size() || m_.size() != params.size()) {
      throw ContractError("adam: gradient/parameter block count mismatch");
    }
    ++t_;
    const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    const T c1 = static_cast<T>(1.0 - std::pow(beta1_, static_cast<double>(t_)));
    const T c2 = static_cast<T>(1.0 - std::pow(beta2_, static_cast<double>(t_)));
    const T lr = static_cast<T>(lr_), eps = static_cast<T>(eps_);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      auto& p = params.blocks[i].second;
      m_[i] = b1 * m_[i] + (T(1) - b1) * grads[i];
      v_[i] = b2 * v_[i] + (T(1) - b2) * grads[i].cwiseAbs2();
      p.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }

 private:
  double lr_ = 5e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace xlfnd::optim
