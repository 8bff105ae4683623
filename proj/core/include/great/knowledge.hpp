// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "great/backbones.hpp"

namespace great::knowledge {

// Token-level embedding of the object geometry text (capped at token_cap)
// plus three pooled intention embeddings stacked into [3 x C].
std::pair<ad::Var, ad::Var> encode_knowledge(ad::Tape& tape, const KnowledgeRecord& record,
                                             nn::Binder& params, const nn::ModelConfig& config);

// Cross-attention between the two repositories followed by self-attention,
// both residual; shapes are preserved.
std::pair<ad::Var, ad::Var> integrate_knowledge(ad::Tape& tape, ad::Var knowledge_obj,
                                                ad::Var knowledge_aff, nn::Binder& params,
                                                const nn::ModelConfig& config);

}  // namespace great::knowledge
