#pragma once

#include <memory>
#include <string>

#include "gameid/identify.hpp"

namespace gameid {

// Read-only identification endpoint:
//   GET  /healthz                      -> {"status":"ok"}
//   POST /identify?top_k=K  (multipart field "image" or a raw image body)
//        -> {"predictions":[{game_id,title,probability}...],"model":{...}}
// Model replacement is swap-on-load: in-flight requests finish against the
// model they started with.
class IdentifyServer {
 public:
  explicit IdentifyServer(std::shared_ptr<IdentificationModel> model);
  ~IdentifyServer();

  IdentifyServer(const IdentifyServer&) = delete;
  IdentifyServer& operator=(const IdentifyServer&) = delete;

  void swap_model(std::shared_ptr<IdentificationModel> model);

  // Blocks until stop(); returns false if the port cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port and serves on a background thread (tests).
  int listen_background(const std::string& host);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gameid
