#pragma once

// Differentiable tensor operations. Every op takes and returns Vars on the
// same tape, works on rank-2 values, and records its own backward rule.

#include <cstddef>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mate/numerics/tape.hpp"

namespace mate::num {

// Linear algebra
Var matmul(Var a, Var b);     // [M,K] x [K,N]
Var matmul_nt(Var a, Var b);  // [M,K] x [N,K]^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row(Var a, Var row);  // row broadcast over every row of a
/// x W + b for x [T,in], W [in,out], b [1,out].
Var linear(Var x, Var weight, Var bias);

// Pointwise
Var gelu(Var a);  // exact erf form

// Normalization and probabilities
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Row-wise softmax; keys (columns) with key_valid[j]==false get probability 0.
Var softmax_rows(Var scores, std::span<const bool> key_valid = {});
Var log_softmax_rows(Var logits);
/// Per-row -log softmax(logits)[labels[r]]; returns [rows,1].
Var cross_entropy_rows(Var logits, std::span<const int> labels);
/// Scalar cross entropy of a single logits row.
Var cross_entropy(Var logits, int label);

// Indexing and layout
Var gather_rows(Var table, std::span<const int> ids);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
/// Picks individual elements; returns [n,1].
Var select(Var x, std::span<const std::pair<std::size_t, std::size_t>> coords);

// Reductions
Var sum(Var x);
Var mean(Var x);
Var dot(Var a, Var b);  // sum of elementwise products, [1,1]
/// Arithmetic mean of the rows whose mask entry is true (all rows when the
/// mask is empty); returns [1,d].
Var mean_pool(Var seq, std::span<const bool> valid);

// Sequence
/// 1-D convolution over the row (time) axis with symmetric zero padding of
/// (kernel_width-1)/2 frames, so the output has ceil(T/stride) rows.
/// weight is [kernel_width*in_channels, out_channels], tap-major.
Var conv1d(Var input, Var weight, Var bias, std::size_t kernel_width, std::size_t stride);
std::size_t conv1d_output_length(std::size_t frames, std::size_t stride);
/// Folds ceil(./stride) over the strides; an empty list returns frames.
std::size_t conv_output_length(std::size_t frames, std::span<const std::size_t> strides);

/// Inverted dropout. Identity when rate is 0.
Var dropout(Var x, double rate, std::mt19937_64& rng);

}  // namespace mate::num
