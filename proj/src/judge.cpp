#include "judge.hpp"

#include "common.hpp"
#include "datagen.hpp"
#include "metrics.hpp"
#include "vocab.hpp"

#include <json.hpp>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

namespace armor {

const std::vector<rendering> & judge_renderings() {
    static const std::vector<rendering> table = [] {
        std::vector<rendering> t;
        t.push_back({-1, success_template()});
        const auto & prefixes = reasoning_prefixes();
        for (const auto & fm : modes()) {
            t.push_back({fm.id, fm.tmpl});
            for (const auto & p : prefixes) {
                std::vector<int> r = p;
                r.insert(r.end(), fm.tmpl.begin(), fm.tmpl.end());
                t.push_back({fm.id, std::move(r)});
            }
        }
        return t;
    }();
    return table;
}

inversion invert_reasoning(const std::vector<int> & tokens) {
    inversion best;
    bool first = true;
    for (const auto & r : judge_renderings()) {
        const double f1 = token_f1(tokens, r.tokens);
        if (first || f1 > best.f1) {
            best.mode = r.mode;
            best.f1   = f1;
            first     = false;
        }
    }
    return best;
}

std::vector<judge_result> template_judge::score(const std::vector<judge_request> & reqs) {
    std::vector<judge_result> out;
    out.reserve(reqs.size());
    for (const auto & rq : reqs) {
        judge_result jr;
        jr.id     = rq.id;
        jr.scored = true;
        const inversion ref  = invert_reasoning(rq.reference);
        const inversion cand = invert_reasoning(rq.candidate);
        if (cand.mode == ref.mode && cand.f1 >= threshold) {
            jr.score = 1.0;
        } else {
            jr.score = token_f1(rq.candidate, rq.reference);
        }
        out.push_back(std::move(jr));
    }
    return out;
}

process_judge::process_judge(std::string command, int64_t timeout_ms)
    : command_(std::move(command)), timeout_ms_(timeout_ms) {
    if (command_.empty()) fail(errc::invalid_argument, "judge: empty command");
    if (timeout_ms_ < 1)  fail(errc::invalid_argument, "judge: timeout must be >= 1 ms");
    ::signal(SIGPIPE, SIG_IGN);  // a dead child must not kill the caller
}

process_judge::~process_judge() { kill_child(); }

void process_judge::spawn() {
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) fail(errc::io, "judge: pipe failed");
    if (pipe(from_child) != 0) {
        close(to_child[0]);
        close(to_child[1]);
        fail(errc::io, "judge: pipe failed");
    }
    const int pid = fork();
    if (pid < 0) fail(errc::io, "judge: fork failed");
    if (pid == 0) {
        setpgid(0, 0);  // own process group so descendants die with the shell
        dup2(to_child[0], 0);
        dup2(from_child[1], 1);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command_.c_str(), (char *) nullptr);
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_    = pid;
    in_fd_  = to_child[1];
    out_fd_ = from_child[0];
    buf_.clear();
}

void process_judge::kill_child() {
    if (in_fd_ >= 0)  close(in_fd_);
    if (out_fd_ >= 0) close(out_fd_);
    if (pid_ > 0) {
        ::kill(-pid_, SIGKILL);  // the whole group, shell and descendants
        int st = 0;
        waitpid(pid_, &st, 0);
    }
    pid_    = -1;
    in_fd_  = -1;
    out_fd_ = -1;
    buf_.clear();
}

bool process_judge::send_line(const std::string & line) {
    size_t off = 0;
    while (off < line.size()) {
        const ssize_t n = write(in_fd_, line.data() + off, line.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        off += (size_t) n;
    }
    return true;
}

bool process_judge::read_line(std::string & line) {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::milliseconds(timeout_ms_);
    for (;;) {
        const size_t nl = buf_.find('\n');
        if (nl != std::string::npos) {
            line = buf_.substr(0, nl);
            buf_.erase(0, nl + 1);
            return true;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                              deadline - clock::now()).count();
        if (left <= 0) return false;
        pollfd pfd{out_fd_, POLLIN, 0};
        const int pr = poll(&pfd, 1, (int) left);
        if (pr < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        if (pr == 0) return false;  // timeout
        char    chunk[4096];
        ssize_t n = read(out_fd_, chunk, sizeof(chunk));
        if (n <= 0) return false;  // eof or error
        buf_.append(chunk, (size_t) n);
    }
}

std::vector<judge_result> process_judge::score(const std::vector<judge_request> & reqs) {
    std::vector<judge_result> out;
    out.reserve(reqs.size());
    for (const auto & rq : reqs) {
        judge_result jr;
        jr.id = rq.id;
        if (pid_ < 0) spawn();

        nlohmann::json req = {
            {"id", rq.id},
            {"candidate", vocab::to_text(rq.candidate)},
            {"reference", vocab::to_text(rq.reference)},
        };
        std::string line;
        bool ok = send_line(req.dump() + "\n") && read_line(line);
        if (ok) {
            try {
                auto resp = nlohmann::json::parse(line);
                const std::string id = resp.at("id").get<std::string>();
                const double score   = resp.at("score").get<double>();
                if (id != rq.id || !std::isfinite(score)) {
                    ok = false;
                } else {
                    jr.score  = score;
                    jr.scored = true;
                }
            } catch (const nlohmann::json::exception &) {
                ok = false;
            }
        }
        if (!ok) kill_child();  // lazily respawned by the next request
        out.push_back(std::move(jr));
    }
    return out;
}

}  // namespace armor
