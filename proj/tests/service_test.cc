#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <thread>

#include "cogscreen/active_loop.h"
#include "cogscreen/service.h"
#include "cogscreen/synthetic.h"
#include "httplib.h"

namespace cogscreen {
namespace {

using nlohmann::json;

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    lexicon_ = std::make_shared<const ConceptLexicon>(ConceptLexicon::standard());
    GenConfig g;
    g.n_patients = 200;
    g.unlabeled_fraction = 0.5;
    LoopModels m;
    LogisticModel lm;
    lm.feature_names = lexicon_->names();
    lm.weights = Vector::Zero(static_cast<Eigen::Index>(lexicon_->size()));
    lm.stats = {Vector::Zero(lm.weights.size()), Vector::Ones(lm.weights.size())};
    m.regex = lm;
    const auto journal = std::filesystem::temp_directory_path() / "cogscreen_service_test.jsonl";
    std::filesystem::remove(journal);
    LoopConfig cfg;
    cfg.retrain_after = 3;
    loop_ = std::make_unique<ActiveLoop>(generate_synthetic_corpus(g, 4), std::move(m), cfg, Preprocessor(), lexicon_,
                                         journal);
    loop_->run_iteration();
    service_ = std::make_unique<AnnotationService>(*loop_);
    port_ = service_->start("127.0.0.1", 0);
  }

  void TearDown() override {
    service_->stop();
    loop_->wait_for_retrain();
  }

  httplib::Client client() {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

  std::shared_ptr<const ConceptLexicon> lexicon_;
  std::unique_ptr<ActiveLoop> loop_;
  std::unique_ptr<AnnotationService> service_;
  int port_ = 0;
};

TEST_F(ServiceTest, CheckoutViewLabelMetrics) {
  auto c = client();
  auto next = c.Get("/api/tasks/next?annotator=alice");
  ASSERT_TRUE(next);
  ASSERT_EQ(next->status, 200);
  const auto task = json::parse(next->body);
  EXPECT_EQ(task.at("status"), "assigned");
  EXPECT_EQ(task.at("annotator"), "alice");
  const std::string id = task.at("task_id");

  auto view = c.Get("/api/tasks/" + id);
  ASSERT_EQ(view->status, 200);
  const auto v = json::parse(view->body);
  EXPECT_EQ(v.at("categories").size(), 15u);
  ASSERT_FALSE(v.at("notes").empty());
  for (const auto& n : v.at("notes")) {
    std::string joined;
    for (const auto& s : n.at("segments")) joined += s.at("text").get<std::string>();
    EXPECT_EQ(joined, n.at("text").get<std::string>());
  }

  const std::string body = R"({"label": "present", "annotator": "alice"})";
  auto labeled = c.Post("/api/tasks/" + id + "/label", body, "application/json");
  ASSERT_EQ(labeled->status, 200);
  EXPECT_EQ(json::parse(labeled->body).at("label"), "present");
  auto again = c.Post("/api/tasks/" + id + "/label", body, "application/json");
  EXPECT_EQ(again->status, 200);
  auto conflict = c.Post("/api/tasks/" + id + "/label", R"({"label": "absent"})", "application/json");
  EXPECT_EQ(conflict->status, 409);

  auto metrics = c.Get("/api/metrics");
  ASSERT_EQ(metrics->status, 200);
  EXPECT_EQ(json::parse(metrics->body).at("labels"), 1);
}

TEST_F(ServiceTest, ErrorStatuses) {
  auto c = client();
  EXPECT_EQ(c.Get("/api/tasks/T999-nobody")->status, 404);
  EXPECT_EQ(c.Post("/api/tasks/T999-nobody/label", R"({"label": "present"})", "application/json")->status, 404);
  const auto id = json::parse(c.Get("/api/tasks/next?annotator=bob")->body).at("task_id").get<std::string>();
  EXPECT_EQ(c.Post("/api/tasks/" + id + "/label", R"({"label": "maybe"})", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/api/tasks/" + id + "/label", "{not json", "application/json")->status, 400);
  EXPECT_EQ(c.Post("/api/tasks/" + id + "/skip", "{}", "application/json")->status, 200);
  EXPECT_EQ(c.Post("/api/tasks/" + id + "/label", R"({"label": "present"})", "application/json")->status, 409);
}

TEST_F(ServiceTest, DrainedQueueAndIterate) {
  auto c = client();
  int served = 0;
  while (true) {
    auto r = c.Get("/api/tasks/next?annotator=x");
    if (r->status == 204) break;
    ASSERT_EQ(r->status, 200);
    const auto id = json::parse(r->body).at("task_id").get<std::string>();
    c.Post("/api/tasks/" + id + "/label", R"({"label": "absent"})", "application/json");
    ++served;
  }
  EXPECT_EQ(served, 10);
  auto it = c.Post("/api/iterate", "", "application/json");
  ASSERT_EQ(it->status, 200);
  const auto report = json::parse(it->body);
  EXPECT_TRUE(report.at("retrain_started").get<bool>());
  loop_->wait_for_retrain();
  EXPECT_EQ(json::parse(c.Get("/api/metrics")->body).at("retrains"), 1);
}

TEST_F(ServiceTest, ParallelCheckoutsAreExclusive) {
  std::vector<std::string> ids(30);
  std::vector<std::thread> threads;
  for (int i = 0; i < 30; ++i) {
    threads.emplace_back([&, i] {
      auto c = client();
      auto r = c.Get("/api/tasks/next?annotator=t" + std::to_string(i));
      if (r && r->status == 200) ids[i] = json::parse(r->body).at("task_id");
    });
  }
  for (auto& t : threads) t.join();
  std::set<std::string> unique;
  int served = 0;
  for (const auto& id : ids) {
    if (id.empty()) continue;
    ++served;
    EXPECT_TRUE(unique.insert(id).second);
  }
  EXPECT_EQ(served, 10);
}

}  // namespace
}  // namespace cogscreen
