#pragma once

#include "latentlens/gmm.hpp"

namespace latentlens {

/// A model g that scores the classes of the sample a seed will generate,
/// without running the generator. Rows of `inputs` are seeds; rows of the
/// result are class scores (probabilities or regressed posteriors). The
/// predicted label is the argmax, the confidence the top-two margin.
class LatentModel {
 public:
  virtual ~LatentModel() = default;
  virtual int input_dim() const = 0;
  virtual int num_classes() const = 0;
  virtual Matrix predict(const Matrix& inputs) const = 0;

  Vector predict_one(const Vector& input) const {
    return predict(input.transpose()).row(0).transpose();
  }
};

}  // namespace latentlens
