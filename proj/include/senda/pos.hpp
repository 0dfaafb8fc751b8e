#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace senda {

/// Universal POS tag set. Tags outside this set degrade to X on ingest.
enum class PosTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
};

inline constexpr std::array<PosTag, 17> kAllPosTags = {
    PosTag::Adj,  PosTag::Adp,   PosTag::Adv,   PosTag::Aux,  PosTag::Cconj,
    PosTag::Det,  PosTag::Intj,  PosTag::Noun,  PosTag::Num,  PosTag::Part,
    PosTag::Pron, PosTag::Propn, PosTag::Punct, PosTag::Sconj, PosTag::Sym,
    PosTag::Verb, PosTag::X,
};

inline std::string_view to_string(PosTag tag) {
    switch (tag) {
        case PosTag::Adj: return "ADJ";
        case PosTag::Adp: return "ADP";
        case PosTag::Adv: return "ADV";
        case PosTag::Aux: return "AUX";
        case PosTag::Cconj: return "CCONJ";
        case PosTag::Det: return "DET";
        case PosTag::Intj: return "INTJ";
        case PosTag::Noun: return "NOUN";
        case PosTag::Num: return "NUM";
        case PosTag::Part: return "PART";
        case PosTag::Pron: return "PRON";
        case PosTag::Propn: return "PROPN";
        case PosTag::Punct: return "PUNCT";
        case PosTag::Sconj: return "SCONJ";
        case PosTag::Sym: return "SYM";
        case PosTag::Verb: return "VERB";
        case PosTag::X: return "X";
    }
    return "X";
}

inline std::optional<PosTag> parse_pos_tag(std::string_view s) {
    for (PosTag tag : kAllPosTags) {
        if (s == to_string(tag)) return tag;
    }
    return std::nullopt;
}

}  // namespace senda
