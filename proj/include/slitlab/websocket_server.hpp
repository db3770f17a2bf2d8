#pragma once

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <string>

#include "slitlab/protocol.hpp"

// WebSocket front end for SessionHost: one session per connection, text
// frames carry the protocol messages. All connections share one
// io_context thread; each owns its host, timer and record file.
namespace slitlab {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8765;
    double tick_rate = 30.0;
    HostConfig host;
    std::optional<std::uint64_t> seed; // random per connection when unset
    std::filesystem::path data_dir = "data";
    std::ostream* log = &std::clog;
};

class WebSocketServer {
public:
    explicit WebSocketServer(ServerOptions opt)
        : opt_(std::move(opt)), acceptor_(ioc_, tcp::endpoint(net::ip::make_address(opt_.address), opt_.port)) {
        std::filesystem::create_directories(opt_.data_dir);
    }

    /// Bound port; useful when constructed with port 0.
    [[nodiscard]] unsigned short port() const { return acceptor_.local_endpoint().port(); }

    /// Serves until stop() is called.
    void run() {
        accept();
        ioc_.run();
    }

    void stop() {
        net::post(ioc_, [this] {
            beast::error_code ec;
            acceptor_.close(ec);
            ioc_.stop();
        });
    }

private:
    class Connection : public std::enable_shared_from_this<Connection> {
    public:
        Connection(tcp::socket socket, WebSocketServer& server)
            : ws_(std::move(socket)), timer_(ws_.get_executor()), server_(server) {}

        void start() {
            ws_.text(true);
            ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
                if (ec) return;
                self->on_open();
            });
        }

    private:
        void on_open() {
            HostConfig cfg = server_.opt_.host;
            if (server_.opt_.seed) {
                cfg.world.rng_seed = *server_.opt_.seed;
            } else {
                std::random_device rd;
                cfg.world.rng_seed = (std::uint64_t{rd()} << 32) | rd();
            }
            cfg.session_id = server_.next_session_id();
            const auto dir = server_.opt_.data_dir;
            auto log = server_.opt_.log;
            host_.emplace(cfg, [dir, log, this](const Session& s) -> std::unique_ptr<std::ostream> {
                path_ = dir / (s.id + ".jsonl");
                if (log) *log << "session " << s.id << " live, recording to " << path_.string() << '\n';
                return std::make_unique<std::ofstream>(path_);
            });
            period_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(1.0 / std::max(1.0, server_.opt_.tick_rate)));
            next_ = std::chrono::steady_clock::now();
            read();
            schedule_tick();
        }

        void read() {
            ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) return self->on_closed();
                self->host_->receive(beast::buffers_to_string(self->buffer_.data()));
                self->buffer_.consume(self->buffer_.size());
                self->flush();
                self->read();
            });
        }

        void schedule_tick() {
            next_ += period_;
            timer_.expires_at(next_);
            timer_.async_wait([self = shared_from_this()](beast::error_code ec) {
                if (ec || self->closed_) return;
                self->host_->advance();
                self->flush();
                if (self->host_->finished()) {
                    self->closing_ = true;
                    self->maybe_close();
                    return;
                }
                self->schedule_tick();
            });
        }

        void flush() {
            for (auto& frame : host_->take_outbox()) queue_.push_back(std::move(frame));
            write();
        }

        void write() {
            if (writing_ || queue_.empty() || closed_) return;
            writing_ = true;
            ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
                self->writing_ = false;
                if (ec) return self->on_closed();
                self->queue_.pop_front();
                self->write();
                self->maybe_close();
            });
        }

        void maybe_close() {
            if (!closing_ || writing_ || !queue_.empty() || closed_) return;
            closed_ = true;
            ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
        }

        void on_closed() {
            if (closed_) return;
            closed_ = true;
            timer_.cancel();
            if (host_ && !host_->finished()) {
                host_->disconnect();
                if (auto log = server_.opt_.log) *log << "connection lost; session file closed\n";
            }
        }

        websocket::stream<beast::tcp_stream> ws_;
        net::steady_timer timer_;
        WebSocketServer& server_;
        beast::flat_buffer buffer_;
        std::optional<SessionHost> host_;
        std::deque<std::string> queue_;
        std::filesystem::path path_;
        std::chrono::steady_clock::duration period_{};
        std::chrono::steady_clock::time_point next_{};
        bool writing_ = false;
        bool closing_ = false;
        bool closed_ = false;
    };

    void accept() {
        acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;
            std::make_shared<Connection>(std::move(socket), *this)->start();
            accept();
        });
    }

    std::string next_session_id() {
        const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        return "s" + std::to_string(now) + "-" + std::to_string(counter_++);
    }

    ServerOptions opt_;
    net::io_context ioc_;
    tcp::acceptor acceptor_;
    std::size_t counter_ = 0;
};

} // namespace slitlab
