#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

// resolv.h (dragged in by httplib) leaks `#define _res ...`, which collides
// with Eigen's parameter names in any later include.
#ifdef _res
#undef _res
#endif

#include <chrono>
#include <cstring>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>
#include <vector>

#include "senda/errors.hpp"
#include "senda/negativegen.hpp"

namespace senda {

// ---------------------------------------------------------------------------
// Wire format. Request: {"id":..., "template":[surface | {"sentinel":n}...],
// "m":...}. Response: {"id":..., "candidates":[{"fills":[[tokens]...],
// "score":...}...]}.
// ---------------------------------------------------------------------------

inline nlohmann::json template_to_json(const MaskedTemplate& tmpl) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& item : tmpl.render()) {
        if (const auto* tok = std::get_if<Token>(&item))
            arr.push_back(tok->surface);
        else
            arr.push_back({{"sentinel", std::get<Sentinel>(item).id}});
    }
    return arr;
}

inline nlohmann::json make_generate_request(const std::string& id, const MaskedTemplate& tmpl,
                                            std::size_t m) {
    return nlohmann::json{{"id", id}, {"template", template_to_json(tmpl)}, {"m", m}};
}

/// Validates a generator response and applies the local exclusion rule: a
/// candidate whose fills all equal the original spans is not a negative.
inline std::vector<FillCandidate> parse_generate_response(const nlohmann::json& response,
                                                          const std::string& id,
                                                          const MaskedTemplate& tmpl,
                                                          std::size_t m) {
    if (!response.is_object() || !response.contains("id") || !response.contains("candidates"))
        throw AdapterError("adapter response missing id or candidates");
    if (response["id"].get<std::string>() != id)
        throw AdapterError("adapter answered for id \"" + response["id"].get<std::string>() +
                           "\", expected \"" + id + "\"");
    if (!response["candidates"].is_array() || response["candidates"].empty())
        throw AdapterError("adapter returned no candidates for id \"" + id + "\"");

    const std::size_t slots = tmpl.sentinel_count();
    std::vector<std::vector<std::string>> original(slots);
    for (std::size_t i = 0; i < slots; ++i) original[i] = tmpl.span_surfaces(i);

    std::vector<FillCandidate> out;
    for (const auto& c : response["candidates"]) {
        if (!c.contains("fills") || !c["fills"].is_array() || c["fills"].size() != slots)
            throw AdapterError("adapter candidate fills not aligned to " +
                               std::to_string(slots) + " sentinel(s)");
        FillCandidate cand;
        cand.score = c.value("score", 0.0);
        bool identity = true;
        for (std::size_t i = 0; i < slots; ++i) {
            auto fill = c["fills"][i].get<std::vector<std::string>>();
            if (fill.empty()) throw AdapterError("adapter candidate with empty fill");
            if (fill != original[i]) identity = false;
            cand.fills.push_back(std::move(fill));
        }
        if (identity) continue;
        out.push_back(std::move(cand));
    }
    if (out.empty())
        throw AdapterError("adapter returned only identity candidates for id \"" + id + "\"");

    std::sort(out.begin(), out.end(), [](const FillCandidate& a, const FillCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.fills < b.fills;
    });
    if (out.size() > m) out.resize(m);
    return out;
}

// ---------------------------------------------------------------------------
// Transports
// ---------------------------------------------------------------------------

class GeneratorAdapter {
public:
    virtual ~GeneratorAdapter() = default;
    virtual nlohmann::json roundtrip(const nlohmann::json& request) = 0;
};

/// Child process speaking one JSON object per line on stdin/stdout. One
/// request in flight per instance.
class ProcessAdapter : public GeneratorAdapter {
public:
    explicit ProcessAdapter(const std::string& command,
                            std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : timeout_(timeout) {
        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw AdapterError("cannot create adapter pipes");
        pid_ = fork();
        if (pid_ < 0) throw AdapterError("cannot fork adapter process");
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            execl("/bin/sh", "sh", "-c", command.c_str(), nullptr);
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
    }

    ProcessAdapter(const ProcessAdapter&) = delete;
    ProcessAdapter& operator=(const ProcessAdapter&) = delete;

    ~ProcessAdapter() override {
        if (write_fd_ >= 0) close(write_fd_);
        if (read_fd_ >= 0) close(read_fd_);
        if (pid_ > 0) {
            // Give the child a moment to exit on stdin EOF, then insist.
            for (int i = 0; i < 20; ++i) {
                if (waitpid(pid_, nullptr, WNOHANG) != 0) return;
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
            kill(pid_, SIGKILL);
            waitpid(pid_, nullptr, 0);
        }
    }

    nlohmann::json roundtrip(const nlohmann::json& request) override {
        const std::string line = request.dump() + "\n";
        std::size_t written = 0;
        while (written < line.size()) {
            const ssize_t n = write(write_fd_, line.data() + written, line.size() - written);
            if (n <= 0) throw AdapterError("adapter process closed its input");
            written += static_cast<std::size_t>(n);
        }
        const std::string reply = read_line();
        try {
            return nlohmann::json::parse(reply);
        } catch (const nlohmann::json::exception& e) {
            throw AdapterError(std::string("adapter wrote malformed JSON: ") + e.what());
        }
    }

private:
    std::string read_line() {
        const auto deadline = std::chrono::steady_clock::now() + timeout_;
        while (true) {
            auto newline = buffer_.find('\n');
            if (newline != std::string::npos) {
                std::string line = buffer_.substr(0, newline);
                buffer_.erase(0, newline + 1);
                return line;
            }
            const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (remaining.count() <= 0)
                throw AdapterError("adapter timed out after " + std::to_string(timeout_.count()) +
                                   " ms");
            pollfd pfd{read_fd_, POLLIN, 0};
            const int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
            if (ready < 0) throw AdapterError("poll on adapter pipe failed");
            if (ready == 0)
                throw AdapterError("adapter timed out after " + std::to_string(timeout_.count()) +
                                   " ms");
            char chunk[4096];
            const ssize_t n = read(read_fd_, chunk, sizeof(chunk));
            if (n < 0) throw AdapterError("read from adapter failed");
            if (n == 0) throw AdapterError("adapter exited without answering");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    std::string buffer_;
    std::chrono::milliseconds timeout_;
};

/// Generation over HTTP: POST the request JSON to a configured URL.
class HttpAdapter : public GeneratorAdapter {
public:
    explicit HttpAdapter(std::string url,
                         std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : url_(std::move(url)), timeout_(timeout) {
        const auto scheme_end = url_.find("://");
        if (scheme_end == std::string::npos) throw AdapterError("adapter URL needs a scheme");
        const auto path_start = url_.find('/', scheme_end + 3);
        base_ = path_start == std::string::npos ? url_ : url_.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : url_.substr(path_start);
    }

    nlohmann::json roundtrip(const nlohmann::json& request) override {
        httplib::Client client(base_);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_));
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        auto res = client.Post(path_, request.dump(), "application/json");
        if (!res) throw AdapterError("adapter POST to " + url_ + " failed or timed out");
        if (res->status != 200)
            throw AdapterError("adapter POST to " + url_ + " returned status " +
                               std::to_string(res->status));
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw AdapterError(std::string("adapter HTTP body is malformed JSON: ") + e.what());
        }
    }

private:
    std::string url_;
    std::string base_;
    std::string path_;
    std::chrono::milliseconds timeout_;
};

/// Fetch candidates for one template from an external generator.
inline std::vector<FillCandidate> external_generate(const MaskedTemplate& tmpl,
                                                    GeneratorAdapter& adapter, std::size_t m,
                                                    const std::string& request_id) {
    if (m < 1) throw std::invalid_argument("external_generate: m must be >= 1");
    if (tmpl.sentinel_count() == 0)
        throw std::invalid_argument("external_generate: template has no sentinel");
    const auto response = adapter.roundtrip(make_generate_request(request_id, tmpl, m));
    return parse_generate_response(response, request_id, tmpl, m);
}

}  // namespace senda
