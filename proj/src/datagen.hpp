#pragma once

#include "tensor.hpp"
#include "vocab.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace armor {

constexpr int k_frame_dim = 16;
constexpr int k_ep_len    = 12;
constexpr int k_num_modes = 8;

enum class split_t { sparse, dense, test };

const char * split_name(split_t s);
split_t      split_from_name(const std::string & s);

struct failure_mode {
    int                 id;
    std::string         name;
    std::vector<int>    tmpl;       // template token ids (no prefix, no eos)
    std::vector<double> signature;  // unit vector, length k_frame_dim
};

// the 8 modes with deterministic orthonormal signatures
const std::vector<failure_mode> & modes();

// the two filler prefixes and the success template (token ids)
const std::vector<std::vector<int>> & reasoning_prefixes();
const std::vector<int> &              success_template();

struct episode {
    std::string      id;
    tensor           frames;  // k_ep_len x k_frame_dim
    bool             failure = false;
    int              mode    = -1;  // valid iff failure
    bool             has_reasoning = false;
    std::vector<int> reasoning;     // token ids, no bos/eos
    split_t          split = split_t::test;
};

struct dataset_manifest {
    uint64_t seed = 0;
    int64_t  count_sparse = 0, count_dense = 0, count_test = 0;
    double   success_fraction_sparse = 0.5;
    double   success_fraction_dense  = 0.5;
    double   success_fraction_test   = 0.5;  // must be exactly 0.5
    int      frame_dim = k_frame_dim;
    int      ep_len    = k_ep_len;
    std::string vocab_hash;
};

struct dataset {
    dataset_manifest     manifest;
    std::vector<episode> sparse, dense, test;
};

// fixed template, prefixed by one of the two filler prefixes chosen by rng;
// mode -1 means the success sentinel (fixed, no prefix)
std::vector<int> render_reasoning(int mode, rng & g);

// deterministic episode from its own seed stream; noise is drawn before any
// label-dependent step so success/failure share base+noise at equal seeds.
// reasoning is always rendered here; split assignment may strip it.
episode generate_episode(uint64_t seed, bool failure, int mode);

// build all three splits in memory (ids, labels, modes, shuffling all derived
// from manifest.seed)
dataset generate_dataset(const dataset_manifest & cfg);

// write sparse.jsonl / dense.jsonl / test.jsonl / manifest.json / vocab.json
void write_dataset(const dataset & ds, const std::string & dir);

std::vector<episode> load_split(const std::string & path, split_t split);
dataset              load_dataset(const std::string & dir);

dataset_manifest load_manifest(const std::string & path);

}  // namespace armor
