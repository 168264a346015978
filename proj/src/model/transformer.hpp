#pragma once

#include <span>
#include <string>

#include "mate/model/model.hpp"

namespace mate::model {

/// Pre-norm block: x + attn(ln1(x)), then + ffn(ln2(.)), GELU FFN. `x` holds
/// `batch` sequences of `length` rows; attention never crosses sequences.
num::Var transformer_block(num::Tape& tape, const Model& model, const std::string& prefix, num::Var x,
                           std::size_t batch, std::size_t length, std::span<const bool> valid,
                           const ForwardMode& mode);

}  // namespace mate::model
