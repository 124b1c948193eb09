#include <gtest/gtest.h>

#include "support/generators.hpp"
#include "symphony/log.hpp"
#include "symphony/rma.hpp"

using namespace symphony;

namespace {

Observation shot(int seed, int w = 64, int h = 40) {
  Image img(w, h, Rgb{static_cast<std::uint8_t>(seed * 37), static_cast<std::uint8_t>(seed * 11), 90});
  img.set(seed % w, (seed / w) % h, Rgb{1, 2, 3});
  return Observation(std::move(img));
}

std::vector<const Part*> images(const ModelRequest& req, const std::string& label = {}) {
  std::vector<const Part*> out;
  for (const auto& m : req.messages)
    for (const auto& p : m.parts)
      if (p.is_image() && (label.empty() || p.label == label)) out.push_back(&p);
  return out;
}

std::string answer(const std::string& reflection, bool milestone = false, const std::string& knowledge = "") {
  nlohmann::json j{{"reflection", reflection}, {"knowledge", knowledge}, {"is_milestone", milestone}};
  return "(Thought) looked at it\n(Answer)\n```json\n" + j.dump() + "\n```";
}

Trajectory trajectory_with(int n, const std::vector<int>& milestones) {
  Trajectory t("task");
  for (int i = 0; i < n; ++i) {
    Step s;
    s.index = i;
    s.observation = shot(i + 1);
    s.action = act::Click{"button " + std::to_string(i)};
    s.summary = StepSummary{"did " + std::to_string(i), true};
    s.milestone = std::find(milestones.begin(), milestones.end(), i) != milestones.end();
    t.append_step(std::move(s));
  }
  return t;
}

ReflectInput input_for(const Trajectory& t) {
  return {"task", long_term_view(t), "(Grounded Action) click", shot(99), {}};
}

}  // namespace

TEST(ZoomCrop, CenterIs800Square) {
  Observation o(Image(1920, 1080, Rgb{200, 200, 200}));
  auto c = zoom_crop(o, {960, 540});
  EXPECT_EQ(c.image.image().width(), 800);
  EXPECT_EQ(c.image.image().height(), 800);
  EXPECT_EQ(c.image.image().at(400, 400), kMarkerColor);
  EXPECT_EQ(c.image.image().at(400 + 11, 400), kMarkerColor);
  EXPECT_NE(c.image.image().at(400 + 20, 400), kMarkerColor);
}

TEST(ZoomCrop, ClampedNearCorner) {
  Observation o(Image(1920, 1080, Rgb{200, 200, 200}));
  auto c = zoom_crop(o, {10, 10});
  EXPECT_EQ(c.image.image().width(), 410);
  EXPECT_EQ(c.image.image().height(), 410);
  EXPECT_EQ(c.x0, 0);
  EXPECT_EQ(c.image.image().at(10, 10), kMarkerColor);
}

TEST(ZoomCrop, OffScreenPointRejected) {
  Observation o(Image(100, 100, Rgb{}));
  try {
    zoom_crop(o, {150, 10});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PointOutOfBounds);
  }
}

TEST(StepSummary, ParsesBothForms) {
  auto a = parse_step_summary("summary: opened the File menu\nsuccess: yes");
  EXPECT_EQ(a.text, "opened the File menu");
  EXPECT_TRUE(a.success);
  auto b = parse_step_summary("Summary: typed the name; Success: false");
  EXPECT_EQ(b.text, "typed the name");
  EXPECT_FALSE(b.success);
  EXPECT_THROW(parse_step_summary("it went fine"), Error);
}

TEST(StepSummary, RetriesOnceThenDefaultsToSuccess) {
  ScriptedBackend be;
  be.then("no verdict here").then("still nothing");
  log::Capture cap;
  auto r = summarize_step("out", shot(1), shot(2), std::nullopt, be);
  EXPECT_EQ(r.attempts, 2);
  EXPECT_TRUE(r.defaulted);
  EXPECT_TRUE(r.summary.success);
  EXPECT_TRUE(cap.contains("assuming success"));
  const auto reqs = be.requests();
  EXPECT_NE(reqs[1].all_text().find(prompts::kStepSummaryReminder), std::string::npos);
}

TEST(StepSummary, CropAttachedWithLabel) {
  ScriptedBackend be;
  be.then("summary: clicked\nsuccess: no");
  Observation before(Image(1920, 1080, Rgb{9, 9, 9}));
  auto crop = zoom_crop(before, {960, 540});
  auto r = summarize_step("out", before, shot(2), crop, be);
  EXPECT_FALSE(r.summary.success);
  EXPECT_EQ(r.attempts, 1);
  EXPECT_EQ(images(r.request).size(), 3u);
  EXPECT_EQ(images(r.request, "crop").size(), 1u);
}

TEST(Hints, AllThreeReachTheRequest) {
  auto t = trajectory_with(3, {});
  auto in = input_for(t);
  in.signals.gui_failure = true;
  in.signals.loop = LoopMatch{0, 3, 3};
  in.signals.coder_pending_verification = true;
  ScriptedBackend be;
  be.then(answer("You are on track. Fine."));
  KnowledgeStore store;
  auto r = reflect(in, store, 3, be);
  const auto text = r.request.all_text();
  EXPECT_NE(text.find(kGuiFailureHint), std::string::npos);
  EXPECT_NE(text.find("[AUTO] loop detected: steps 0..2 ≡ last 3 steps"), std::string::npos);
  EXPECT_NE(text.find(kCoderPendingHint), std::string::npos);
}

TEST(Hints, NoneWhenQuiet) {
  EXPECT_EQ(build_hints({}), "");
  AuxiliarySignals s;
  s.gui_failure = false;
  EXPECT_EQ(build_hints(s), "");
}

TEST(MilestoneGating, OnlyMilestoneScreenshotsAttached) {
  auto t = trajectory_with(6, {2, 4});
  ScriptedBackend be;
  be.then(answer("You are on track. ok"));
  KnowledgeStore store;
  auto r = reflect(input_for(t), store, 6, be);
  EXPECT_EQ(r.image_steps, (std::vector<int>{0, 2, 4}));
  auto hist = images(r.request, "history");
  ASSERT_EQ(hist.size(), 3u);
  EXPECT_EQ(hist[0]->image.content_hash(), t.steps()[0].observation.content_hash());
  EXPECT_EQ(hist[1]->image.content_hash(), t.steps()[2].observation.content_hash());
  EXPECT_EQ(hist[2]->image.content_hash(), t.steps()[4].observation.content_hash());
  EXPECT_EQ(images(r.request, "latest").size(), 1u);
}

TEST(MilestoneGating, CapKeepsInitialAndNewest) {
  std::vector<int> ms;
  for (int i = 1; i < 12; ++i) ms.push_back(i);
  auto t = trajectory_with(12, ms);
  ScriptedBackend be;
  be.then(answer("You are on track. ok"));
  KnowledgeStore store;
  auto r = reflect(input_for(t), store, 12, be);
  EXPECT_EQ(r.image_steps, (std::vector<int>{0, 6, 7, 8, 9, 10, 11}));
  EXPECT_EQ(r.request.image_count(), 8u);
}

TEST(MilestoneGating, PropertyImagesAreMilestonesWithinBudget) {
  test_support::Gen g(41);
  for (int iter = 0; iter < 200; ++iter) {
    const int n = g.uniform(1, 20);
    std::vector<int> ms;
    for (int i = 0; i < n; ++i)
      if (g.coin(0.4)) ms.push_back(i);
    auto t = trajectory_with(n, ms);
    std::vector<int> steps;
    RmaConfig cfg;
    auto req = build_reflection_request(input_for(t), KnowledgeStore{}, cfg, steps);
    EXPECT_LE(req.image_count(), cfg.max_images);
    for (int s : steps) EXPECT_TRUE(s == 0 || std::find(ms.begin(), ms.end(), s) != ms.end());
    EXPECT_EQ(steps.front(), 0);
  }
}

TEST(Reflection, FourStatesParse) {
  using S = ReflectionState;
  EXPECT_EQ(classify_reflection("You are on track. The dialog is open.").state(), S::OnTrack);
  EXPECT_EQ(classify_reflection("Task Completed. File saved.").state(), S::Completed);
  EXPECT_EQ(classify_reflection("The task has been completed.").state(), S::Completed);
  EXPECT_EQ(classify_reflection("Task Infeasible. No such menu.").state(), S::Infeasible);
  EXPECT_EQ(classify_reflection("The task cannot be completed here.").state(), S::Infeasible);
  auto m = classify_reflection("The trajectory is not going according to plan. Lack of Tutorial: three clicks cycle.");
  EXPECT_EQ(m.state(), S::OffTrack);
  EXPECT_EQ(*m.error_type(), OffTrackError::LackOfTutorial);
  EXPECT_EQ(m.explanation(), "three clicks cycle.");
}

TEST(Reflection, FourErrorTypes) {
  const std::vector<std::pair<std::string, OffTrackError>> cases = {
      {"GUI Operation Error: missed the button", OffTrackError::GUIError},
      {"GUI Error: missed the button", OffTrackError::GUIError},
      {"Lack of Tutorial: no idea where", OffTrackError::LackOfTutorial},
      {"Code Error: the script failed", OffTrackError::CodeError},
      {"Other Error: popup", OffTrackError::OtherError}};
  for (const auto& [text, err] : cases) {
    auto m = classify_reflection(std::string(kOffTrackPrefix) + " " + text);
    EXPECT_EQ(*m.error_type(), err) << text;
    EXPECT_EQ(classify_reflection(text).error_type(), err) << text;
  }
}

TEST(Reflection, InconsistentAndUnparseable) {
  try {
    classify_reflection("You are on track. Code Error: the script failed");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentVerdict);
  }
  try {
    classify_reflection(std::string(kOffTrackPrefix) + " something odd");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InconsistentVerdict);
  }
  try {
    classify_reflection("Looks fine to me");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProtocolParseError);
  }
}

TEST(Reflection, ProtocolErrorAfterExactlyOneRetry) {
  auto t = trajectory_with(2, {});
  ScriptedBackend be;
  be.then("no json").then("```json\n{\"reflection\": \"Looks fine\"}\n```").then(answer("You are on track. x"));
  KnowledgeStore store;
  try {
    reflect(input_for(t), store, 2, be);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ProtocolParseError);
  }
  EXPECT_EQ(be.calls(), 2u);
  EXPECT_NE(be.requests()[1].all_text().find(prompts::kReflectionReminder), std::string::npos);
}

TEST(Reflection, RetrySucceeds) {
  auto t = trajectory_with(2, {});
  ScriptedBackend be;
  be.then("garbled").then(answer("Task Completed. saved", true));
  KnowledgeStore store;
  auto r = reflect(input_for(t), store, 2, be);
  EXPECT_EQ(r.attempts, 2);
  EXPECT_EQ(r.verdict.reflection.state(), ReflectionState::Completed);
  EXPECT_TRUE(r.verdict.milestone);
}

TEST(Reflection, LastJsonFenceWins) {
  const std::string text = "```json\n{\"reflection\": \"Looks fine\"}\n```\nactually:\n" +
                           answer("You are on track. second");
  EXPECT_EQ(parse_reflection(text).reflection.explanation(), "second");
}

TEST(Reflection, KnowledgeAppendedOnceAndLintFlags) {
  auto t = trajectory_with(2, {});
  ScriptedBackend be;
  be.then(answer("You are on track. You should click Save next.", false, "Save lives under File"));
  be.then(answer("You are on track. fine", false, "Save lives under File"));
  KnowledgeStore store;
  log::Capture cap;
  auto r = reflect(input_for(t), store, 2, be);
  EXPECT_TRUE(r.knowledge_added);
  EXPECT_FALSE(r.lint.empty());
  EXPECT_TRUE(cap.contains("reads like a plan"));
  auto r2 = reflect(input_for(t), store, 3, be);
  EXPECT_FALSE(r2.knowledge_added);
  EXPECT_EQ(store.size(), 1u);
  EXPECT_EQ(store.entries()[0].origin_step, 2);
  EXPECT_NE(be.requests()[1].all_text().find("Save lives under File"), std::string::npos);
}

TEST(Reflection, FormatClassifyRoundTrip) {
  test_support::Gen g(7);
  const std::vector<ReflectionState> states = {ReflectionState::OnTrack, ReflectionState::Completed,
                                                ReflectionState::Infeasible, ReflectionState::OffTrack};
  const std::vector<OffTrackError> errors = {OffTrackError::GUIError, OffTrackError::LackOfTutorial,
                                             OffTrackError::CodeError, OffTrackError::OtherError};
  const std::vector<std::string> words = {"the", "dialog", "menu", "opened", "file", "saved", "cell", "row", "42"};
  for (int i = 0; i < 2000; ++i) {
    const auto st = g.pick(states);
    std::string expl;
    for (int w = g.uniform(1, 8); w > 0; --w) expl += (expl.empty() ? "" : " ") + g.pick(words);
    std::optional<OffTrackError> err;
    if (st == ReflectionState::OffTrack) err = g.pick(errors);
    ReflectionMessage m(st, err, expl);
    auto back = classify_reflection(format_reflection(m));
    EXPECT_EQ(back.state(), st);
    EXPECT_EQ(back.error_type(), err);
    EXPECT_EQ(back.explanation(), expl);
  }
}
