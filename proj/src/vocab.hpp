#pragma once

#include "common.hpp"

#include <string>
#include <vector>

namespace armor {

// closed task vocabulary: 7 special tokens then the content words, ids fixed
namespace vocab {

enum special : int {
    tok_bos = 0,
    tok_eos,
    tok_pad,
    tok_cond_success,
    tok_cond_failure,
    tok_cond_none,
    tok_sep,
    n_special,
};

const std::vector<std::string> & tokens();
int size();

int                 id_of(const std::string & s);   // throws on unknown token
const std::string & text_of(int id);                // throws on bad id

std::vector<int>         to_ids(const std::vector<std::string> & words);
std::vector<std::string> to_words(const std::vector<int> & ids);
std::string              to_text(const std::vector<int> & ids);  // space-joined

// checksum over the canonical vocab JSON (array of token strings in id order)
std::string hash();

}  // namespace vocab
}  // namespace armor
