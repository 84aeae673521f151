#pragma once

// Local chat-completion stand-in for judge and generator tests. Handlers get
// the parsed request body and return the completion text (or throw to send a
// 500).

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace clab::testing {

class MockChatServer {
  public:
    using Handler = std::function<std::string(const nlohmann::json& body)>;

    explicit MockChatServer(Handler handler, int worker_threads = 8) : handler_(std::move(handler)) {
        server_.new_task_queue = [worker_threads] { return new httplib::ThreadPool(static_cast<std::size_t>(worker_threads)); };
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int now = ++in_flight_;
            int seen = max_in_flight_.load();
            while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
            }
            ++requests_;
            nlohmann::json body = nlohmann::json::parse(req.body);
            {
                std::lock_guard lock(mu_);
                bodies_.push_back(body);
            }
            try {
                const std::string text = handler_(body);
                nlohmann::json out = {{"choices", nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", text}}}}})}};
                res.set_content(out.dump(), "application/json");
            } catch (...) {
                res.status = 500;
            }
            --in_flight_;
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockChatServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    MockChatServer(const MockChatServer&) = delete;
    MockChatServer& operator=(const MockChatServer&) = delete;

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int requests() const { return requests_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }
    std::vector<nlohmann::json> bodies() const {
        std::lock_guard lock(mu_);
        return bodies_;
    }

  private:
    Handler handler_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    mutable std::mutex mu_;
    std::vector<nlohmann::json> bodies_;
};

// Port nobody listens on, for transport-failure tests.
inline int closed_port() {
    httplib::Server s;
    return s.bind_to_any_port("127.0.0.1");
}

} // namespace clab::testing
