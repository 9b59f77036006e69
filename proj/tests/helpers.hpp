#pragma once

// Hand-built fixtures shared across test files. The mini blueprint is small
// enough that every derived quantity (states, variants, baselines, write
// positions) can be verified against values computed by hand.

#include <string>
#include <vector>

#include "amemgym/model.hpp"

namespace testutil {

using namespace amemgym;

/// Two periods, three variables, two questions. Schema order (coffee, bike,
/// app) is deliberately non-alphabetical so ordering bugs cannot hide.
inline Blueprint mini_blueprint() {
    Blueprint bp;
    bp.persona = {"Mini", "A compact test persona with predictable habits.", "mini-pool"};
    bp.seed = 42;
    bp.start_date = "2025-06-01";

    bp.schema.variables = {
        {"coffee", {"black", "latte"}},
        {"bike", {"road", "mtb", "bmx"}},
        {"app", {"ios", "android"}},
    };
    bp.schema.alias_map = {{"coffee_level", "coffee"}};

    bp.initial_state = {{"coffee", "black"}, {"bike", "road"}, {"app", "ios"}};

    PeriodPlan p1;
    p1.index = 1;
    p1.summary = "Took up trail riding.";
    p1.updates = {{"bike", "mtb"}};
    p1.events = {{{"bike"}, "Bought a mountain bike after a trail weekend."}};
    p1.update_queries = {{"I switched things up, my bike is now mtb. Any route tips?",
                          {{"bike", "mtb"}}}};
    bp.periods.push_back(p1);

    PeriodPlan p2;
    p2.index = 2;
    p2.summary = "New phone and a new coffee order.";
    p2.updates = {{"coffee", "latte"}, {"app", "android"}};
    p2.events = {{{"coffee", "app"}, "Replaced the phone and found a better cafe."}};
    p2.update_queries = {
        {"These days my coffee is now latte and my app is now android. Thoughts?",
         {{"coffee", "latte"}, {"app", "android"}}}};
    bp.periods.push_back(p2);

    bp.initial_queries = {
        {"Right now my coffee is black and my bike is road. Where to start?",
         {{"coffee", "black"}, {"bike", "road"}}},
        {"Right now my app is ios. Anything to set up first?", {{"app", "ios"}}},
    };

    EvaluationQuestion q1;
    q1.id = 1;
    q1.text = "What should I plan around my coffee and my bike?";
    q1.required = {"coffee", "bike"};
    q1.variants = {
        {"coffee=black|bike=road", "Espresso stops along flat road loops."},
        {"coffee=black|bike=mtb", "Strong brew before early trailheads."},
        {"coffee=black|bike=bmx", "Quick shots between park sessions."},
        {"coffee=latte|bike=road", "Cafe cruises with a long sit-down."},
        {"coffee=latte|bike=mtb", "Milky warm-up, then the forest climb."},
        {"coffee=latte|bike=bmx", "Foam art first, ramps after."},
    };
    bp.questions.push_back(q1);

    EvaluationQuestion q2;
    q2.id = 2;
    q2.text = "How do I balance my bike time with my app habits?";
    q2.required = {"bike", "app"};
    q2.variants = {
        {"bike=road|app=ios", "Log road miles in the stock tracker."},
        {"bike=road|app=android", "Try the open-source cycling logger."},
        {"bike=mtb|app=ios", "Download offline trail maps tonight."},
        {"bike=mtb|app=android", "Use the widget for trail conditions."},
        {"bike=bmx|app=ios", "Film clips and trim them on the phone."},
        {"bike=bmx|app=android", "Slow-motion capture for trick review."},
    };
    bp.questions.push_back(q2);

    bp.config = GenConfig::base();
    bp.config.n_periods = 2;
    bp.config.num_questions = 2;
    return bp;
}

}  // namespace testutil
