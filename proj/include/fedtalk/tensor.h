/*
 * Copyright 2026 The fedtalk Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FEDTALK_TENSOR_H_
#define FEDTALK_TENSOR_H_

#include <Eigen/Dense>

#include "fedtalk/random.h"

namespace fedtalk {

// Row-major so that flattening a matrix is its storage order.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline Matrix GaussianMatrix(Eigen::Index rows, Eigen::Index cols,
                             double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.Normal();
  return m;
}

inline Vector GaussianVector(Eigen::Index size, double stddev, Rng& rng) {
  Vector v(size);
  for (Eigen::Index i = 0; i < size; ++i) v[i] = stddev * rng.Normal();
  return v;
}

}  // namespace fedtalk

#endif  // FEDTALK_TENSOR_H_
