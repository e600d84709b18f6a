#include "vocab.hpp"

#include <json.hpp>

#include <map>

namespace armor::vocab {

static const std::vector<std::string> k_tokens = {
    "<bos>", "<eos>", "<pad>", "<cond:success>", "<cond:failure>", "<cond:none>", "<sep>",
    "the", "robot", "succeeded", "at", "task", "i", "observe", "see", "did", "not",
    "close", "its", "gripper", "moved", "with", "an", "offset", "along", "y",
    "dropped", "item", "midway", "through", "placed", "in", "wrong", "bin", "was",
    "damaged", "during", "arm", "collided", "obstacle", "grasp", "spilled", "contents",
};

const std::vector<std::string> & tokens() { return k_tokens; }

int size() { return (int) k_tokens.size(); }

static const std::map<std::string, int> & index() {
    static const std::map<std::string, int> idx = [] {
        std::map<std::string, int> m;
        for (size_t i = 0; i < k_tokens.size(); ++i) m[k_tokens[i]] = (int) i;
        return m;
    }();
    return idx;
}

int id_of(const std::string & s) {
    auto it = index().find(s);
    if (it == index().end()) fail(errc::parse, "vocab: unknown token '" + s + "'");
    return it->second;
}

const std::string & text_of(int id) {
    if (id < 0 || id >= size()) fail(errc::invalid_argument, "vocab: bad token id");
    return k_tokens[(size_t) id];
}

std::vector<int> to_ids(const std::vector<std::string> & words) {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto & w : words) ids.push_back(id_of(w));
    return ids;
}

std::vector<std::string> to_words(const std::vector<int> & ids) {
    std::vector<std::string> words;
    words.reserve(ids.size());
    for (int id : ids) words.push_back(text_of(id));
    return words;
}

std::string to_text(const std::vector<int> & ids) {
    std::string s;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) s += ' ';
        s += text_of(ids[(size_t) i]);
    }
    return s;
}

std::string hash() {
    nlohmann::json j = k_tokens;
    std::string    s = j.dump();
    return hex64(fnv1a64(s.data(), s.size()));
}

}  // namespace armor::vocab
