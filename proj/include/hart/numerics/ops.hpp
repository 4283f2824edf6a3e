#pragma once

// Differentiable primitives. Every op reads its inputs from the tape, pushes
// one output node and registers the vector-Jacobian product for it. Matrices
// are rank-2 row-major; a rank-1 tensor of length n is accepted wherever a
// single row [1 x n] is.

#include <cstdint>
#include <span>
#include <vector>

#include "hart/numerics/random.hpp"
#include "hart/numerics/tape.hpp"

namespace hart::num {

class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Linear algebra
Var matmul(Tape& t, Var a, Var b);     // [m x k] * [k x n]
Var matmul_nt(Tape& t, Var a, Var b);  // [m x k] * [n x k]^T

// Elementwise
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var add_row(Tape& t, Var a, Var row);  // broadcast [n] over every row of [m x n]
Var tanh(Tape& t, Var a);
Var gelu(Tape& t, Var a);  // tanh approximation used by GPT-2

// Indexing and layout
Var embedding(Tape& t, Var table, std::span<const int> ids);
Var concat_cols(Tape& t, std::span<const Var> parts);
Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t width);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var masked_fill(Tape& t, Var a, std::span<const std::uint8_t> fill_where, double value);

// Normalization and reductions
Var softmax_rows(Tape& t, Var a);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps);
Var masked_mean_rows(Tape& t, Var a, std::span<const std::uint8_t> row_keep);
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);

// Sum over rows with target >= 0 of -log softmax(row)[target].
Var cross_entropy_sum(Tape& t, Var logits, std::span<const int> targets);

// Inverted dropout; identity when p == 0.
Var dropout(Tape& t, Var a, double p, Rng& rng);

// Non-differentiable helpers over plain tensors.
Tensor softmax_rows(const Tensor& a);
std::vector<double> row_nll(const Tensor& logits, std::span<const int> targets);

}  // namespace hart::num
