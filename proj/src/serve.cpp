#include "gameid/serve.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <mutex>
#include <thread>

#include "gameid/error.hpp"

namespace gameid {

using nlohmann::json;

struct IdentifyServer::Impl {
  httplib::Server server;
  std::shared_ptr<IdentificationModel> model;
  std::mutex model_mu;
  std::thread background;

  std::shared_ptr<IdentificationModel> current_model() {
    std::lock_guard lock(model_mu);
    return model;
  }

  static void reply_error(httplib::Response& res, int status, const std::string& code,
                          const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(),
                    "application/json");
  }

  void setup_routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"status", "ok"}}.dump(), "application/json");
    });

    server.Post("/identify", [this](const httplib::Request& req, httplib::Response& res) {
      auto active = current_model();
      int top_k = 5;
      if (req.has_param("top_k")) {
        try {
          top_k = std::stoi(req.get_param_value("top_k"));
        } catch (const std::exception&) {
          reply_error(res, 400, "invalid_argument", "top_k must be an integer");
          return;
        }
      }
      std::string body;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("image")) {
          reply_error(res, 400, "invalid_argument", "multipart field 'image' missing");
          return;
        }
        body = req.get_file_value("image").content;
      } else {
        body = req.body;
      }
      if (body.empty()) {
        reply_error(res, 400, "invalid_argument", "empty image payload");
        return;
      }
      try {
        const ImageBlob bytes(body.begin(), body.end());
        const Prediction pred = active->identify(bytes, top_k);
        res.set_content(prediction_to_json(pred, *active), "application/json");
      } catch (const Error& e) {
        reply_error(res, 400, e.code_name(), e.what());
      }
    });
  }
};

IdentifyServer::IdentifyServer(std::shared_ptr<IdentificationModel> model)
    : impl_(std::make_unique<Impl>()) {
  if (!model) raise(ErrorCode::invalid_argument, "server needs a model");
  impl_->model = std::move(model);
  impl_->setup_routes();
}

IdentifyServer::~IdentifyServer() { stop(); }

void IdentifyServer::swap_model(std::shared_ptr<IdentificationModel> model) {
  if (!model) raise(ErrorCode::invalid_argument, "cannot swap in a null model");
  std::lock_guard lock(impl_->model_mu);
  impl_->model = std::move(model);
}

bool IdentifyServer::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int IdentifyServer::listen_background(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) raise(ErrorCode::io_error, "cannot bind a port on " + host);
  impl_->background = std::thread([this]() { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void IdentifyServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
  if (impl_->background.joinable()) impl_->background.join();
}

}  // namespace gameid
