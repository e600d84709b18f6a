#pragma once

// reasoning-quality judges. the built-in template judge inverts a candidate
// back to the nearest known rendering by token f1 and awards full credit when
// it lands on the reference's failure mode with enough overlap; an external
// judge process can be plugged in over a line-delimited json protocol.

#include <cstdint>
#include <string>
#include <vector>

namespace armor {

struct judge_request {
    std::string      id;
    std::vector<int> candidate;  // content token ids, no eos
    std::vector<int> reference;
};

struct judge_result {
    std::string id;
    double      score  = 0.0;
    bool        scored = false;
};

struct judge {
    virtual ~judge() = default;
    virtual std::vector<judge_result> score(const std::vector<judge_request> & reqs) = 0;
};

// one rendering of a mode: the template, optionally preceded by a filler
// prefix; mode -1 is the success sentinel. order: success, then per mode
// bare / prefix 0 / prefix 1.
struct rendering {
    int              mode;
    std::vector<int> tokens;
};
const std::vector<rendering> & judge_renderings();

// nearest rendering by token f1; ties resolve to the earliest table entry
struct inversion {
    int    mode = -1;
    double f1   = 0.0;
};
inversion invert_reasoning(const std::vector<int> & tokens);

// full credit iff the candidate inverts to the reference's mode with
// f1 >= threshold; otherwise falls back to token f1 against the reference
struct template_judge final : judge {
    double threshold = 0.6;
    std::vector<judge_result> score(const std::vector<judge_request> & reqs) override;
};

// spawns `command` through /bin/sh and exchanges one json object per line:
// {"id","candidate","reference"} on its stdin, {"id","score"} from its
// stdout, token ids rendered as text. a missing, late, or malformed response
// kills the process (respawned for the next request) and leaves the request
// unscored. installs a process-wide ignore for SIGPIPE.
struct process_judge final : judge {
    explicit process_judge(std::string command, int64_t timeout_ms = 10000);
    ~process_judge() override;
    process_judge(const process_judge &)             = delete;
    process_judge & operator=(const process_judge &) = delete;

    std::vector<judge_result> score(const std::vector<judge_request> & reqs) override;

private:
    std::string command_;
    int64_t     timeout_ms_;
    int         pid_    = -1;
    int         in_fd_  = -1;
    int         out_fd_ = -1;
    std::string buf_;

    void spawn();
    void kill_child();
    bool send_line(const std::string & line);
    bool read_line(std::string & line);
};

}  // namespace armor
