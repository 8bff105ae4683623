// Copyright (C) 2026 The great authors
// SPDX-License-Identifier: Apache-2.0

#include "great/knowledge.hpp"

#include "great/error.hpp"

namespace great::knowledge {

using ad::Var;

std::pair<Var, Var> encode_knowledge(ad::Tape& tape, const KnowledgeRecord& record,
                                     nn::Binder& params, const nn::ModelConfig& config) {
    if (record.object_text.empty()) {
        throw Error(ErrorKind::argument, "knowledge record has an empty object text");
    }
    const nn::TextEmbedding obj = nn::text_encode(tape, record.object_text, params, config);
    Var t_obj = obj.tokens;  // [N_o x C]

    Var t_aff;  // [3 x C]
    for (const auto& text : record.affordance_texts) {
        if (text.empty()) throw Error(ErrorKind::argument, "knowledge record has an empty affordance text");
        const nn::TextEmbedding e = nn::text_encode(tape, text, params, config);
        t_aff = t_aff.defined() ? ad::concat_rows(t_aff, e.pooled) : e.pooled;
    }
    return {t_obj, t_aff};
}

std::pair<Var, Var> integrate_knowledge(ad::Tape& tape, Var knowledge_obj, Var knowledge_aff,
                                        nn::Binder& params, const nn::ModelConfig& config) {
    if (knowledge_obj.cols() != config.channels || knowledge_aff.cols() != config.channels) {
        throw Error(ErrorKind::shape, "integrate_knowledge: token matrices must be [n x C]");
    }
    (void)tape;
    auto fm = [&](Var x, Var y) {
        return nn::residual_attention(x, y, params("kn.fm.wq"), params("kn.fm.wk"),
                                      params("kn.fm.wv"), params("kn.fm.wo"));
    };
    auto fd = [&](Var x) {
        return nn::residual_attention(x, x, params("kn.fd.wq"), params("kn.fd.wk"),
                                      params("kn.fd.wv"), params("kn.fd.wo"));
    };
    Var integrated_obj = fd(fm(knowledge_obj, knowledge_aff));
    Var integrated_aff = fd(fm(knowledge_aff, knowledge_obj));
    return {integrated_obj, integrated_aff};
}

}  // namespace great::knowledge
