// HTTP + websocket front end for RenderService, on Boost.Beast.

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sai/error.hpp"
#include "sai/service.hpp"

namespace sai {

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
namespace fs = std::filesystem;

std::string mime_type(const fs::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json" || ext == ".map") return "application/json";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".wasm") return "application/wasm";
  return "application/octet-stream";
}

// Maps a request target onto a file under root; nullopt for anything that
// would escape it.
std::optional<fs::path> resolve_asset(const fs::path& root, std::string_view target) {
  std::string path(target.substr(0, target.find('?')));
  if (path.empty() || path[0] != '/' || path.find("..") != std::string::npos) return std::nullopt;
  if (path.back() == '/') path += "index.html";
  return root / path.substr(1);
}

// Subscription ids of live websocket sessions; the server drops any that
// remain when it stops so no callback outlives the io_context.
using Subscriptions = std::shared_ptr<std::set<int>>;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, RenderService& service, Subscriptions subs)
      : ws_(std::move(socket)), service_(service), subs_(std::move(subs)) {}

  ~WsSession() { close(); }

  void start(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = shared_from_this();
    auto executor = ws_.get_executor();
    sub_ = service_.subscribe([weak, executor](const Outgoing& out) {
      net::post(executor, [weak, out] {
        if (auto self = weak.lock()) self->send(out);
      });
    });
    subs_->insert(sub_);
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    if (ws_.got_text()) {
      const std::string text = beast::buffers_to_string(buffer_.data());
      if (auto reply = service_.handle_text(text)) {
        send({false, std::make_shared<const std::string>(std::move(*reply))});
      }
    }
    buffer_.consume(buffer_.size());
    read();
  }

  void send(const Outgoing& out) {
    if (closed_) return;
    queue_.push_back(out);
    if (queue_.size() == 1) write_next();
  }

  void write_next() {
    ws_.binary(queue_.front().binary);
    ws_.async_write(net::buffer(*queue_.front().bytes),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write_next();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    queue_.clear();
    if (sub_) {
      service_.unsubscribe(sub_);
      subs_->erase(sub_);
    }
    sub_ = 0;
  }

  websocket::stream<beast::tcp_stream> ws_;
  RenderService& service_;
  Subscriptions subs_;
  beast::flat_buffer buffer_;
  std::deque<Outgoing> queue_;
  int sub_ = 0;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, RenderService& service, const fs::path& assets,
              Subscriptions subs)
      : stream_(std::move(socket)), service_(service), assets_(assets), subs_(std::move(subs)) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;  // includes end_of_stream
    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      if (target == "/stream") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), service_, subs_)->start(std::move(req_));
        return;
      }
      respond(http::status::not_found, "text/plain", "unknown websocket endpoint\n");
      return;
    }
    if (req_.method() != http::verb::get && req_.method() != http::verb::head) {
      respond(http::status::method_not_allowed, "text/plain", "GET only\n");
      return;
    }
    if (target == "/health") {
      respond(http::status::ok, "text/plain", "ok");
      return;
    }
    const auto file = resolve_asset(assets_, target);
    if (!file || !fs::is_regular_file(*file)) {
      respond(http::status::not_found, "text/plain", "not found\n");
      return;
    }
    std::ifstream in(*file, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    respond(http::status::ok, mime_type(*file), body.str());
  }

  void respond(http::status status, const std::string& type, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "sai");
    res->set(http::field::content_type, type);
    res->keep_alive(req_.keep_alive());
    if (req_.method() != http::verb::head) res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res,
                      [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
                        if (ec) return;
                        if (!res->keep_alive()) {
                          beast::error_code ignored;
                          self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                          return;
                        }
                        self->read();
                      });
  }

  beast::tcp_stream stream_;
  RenderService& service_;
  fs::path assets_;
  Subscriptions subs_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(net::io_context& ioc, tcp::endpoint endpoint, RenderService& service, fs::path assets,
           Subscriptions subs)
      : ioc_(ioc), acceptor_(ioc), service_(service), assets_(std::move(assets)), subs_(std::move(subs)) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_),
                           beast::bind_front_handler(&Listener::on_accept, shared_from_this()));
  }

  void close() {
    beast::error_code ignored;
    acceptor_.close(ignored);
  }

 private:
  void on_accept(beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpSession>(std::move(socket), service_, assets_, subs_)->start();
    accept();
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  RenderService& service_;
  fs::path assets_;
  Subscriptions subs_;
};

}  // namespace

void run_server(RenderService& service, const ServerOptions& options,
                std::function<void(unsigned short)> on_listening, std::stop_token stop) {
  net::io_context ioc{1};
  beast::error_code ec;
  const auto address = net::ip::make_address(options.bind, ec);
  if (ec) throw Error(ErrorCode::InvalidArgument, "bad bind address '" + options.bind + "'");

  auto subs = std::make_shared<std::set<int>>();
  std::shared_ptr<Listener> listener;
  try {
    listener = std::make_shared<Listener>(ioc, tcp::endpoint{address, options.port}, service,
                                          fs::path(options.assets_dir), subs);
  } catch (const boost::system::system_error& e) {
    throw Error(ErrorCode::IoFailure, "cannot listen on " + options.bind + ":" +
                                          std::to_string(options.port) + ": " + e.what());
  }
  listener->accept();

  net::signal_set signals(ioc, SIGINT, SIGTERM);
  signals.async_wait([&](beast::error_code, int) { ioc.stop(); });

  // Poll the stop token; cheap and keeps the io_context single-threaded.
  net::steady_timer timer(ioc);
  std::function<void()> poll = [&] {
    if (stop.stop_requested()) {
      ioc.stop();
      return;
    }
    timer.expires_after(std::chrono::milliseconds(50));
    timer.async_wait([&](beast::error_code e) {
      if (!e) poll();
    });
  };
  if (stop.stop_possible()) poll();

  if (on_listening) on_listening(listener->port());
  ioc.run();
  listener->close();
  for (int id : *subs) service.unsubscribe(id);
  subs->clear();
}

}  // namespace sai
