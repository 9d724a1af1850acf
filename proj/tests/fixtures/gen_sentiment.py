"""Regenerates sentiment_reference.json from the vaderSentiment package.

Scores are stored unrounded: the package rounds its public output, so the
module-level round() is replaced by the identity while scoring.
Run from a directory that is not the package directory:
    python3 tests/fixtures/gen_sentiment.py > tests/fixtures/sentiment_reference.json
    python3 tests/fixtures/gen_sentiment.py --stress 400 > tests/fixtures/sentiment_stress.json
"""
import json
import random
import sys

import vaderSentiment.vaderSentiment as vs

SENTENCES = [
    "VADER is smart, handsome, and funny.",
    "VADER is smart, handsome, and funny!",
    "VADER is very smart, handsome, and funny.",
    "VADER is VERY SMART, handsome, and FUNNY.",
    "VADER is VERY SMART, handsome, and FUNNY!!!",
    "VADER is VERY SMART, uber handsome, and FRIGGIN FUNNY!!!",
    "VADER is not smart, handsome, nor funny.",
    "The book was good.",
    "At least it isn't a horrible book.",
    "The book was only kind of good.",
    "The plot was good, but the characters are uncompelling and the dialog is not great.",
    "Today SUX!",
    "Today only kinda sux! But I'll get by, lol",
    "Make sure you :) or :D today!",
    "Not bad at all",
    "The weather is nice today??",
    "Is this really the best you can do???",
    "What a terrible, terrible day.",
    "I don't think this is a good idea.",
    "Never so happy in my life.",
    "He was without doubt the best lecturer.",
    "The professor was shot on the stairs of the university.",
    "The murder shocked the city and the press reacted with outrage.",
    "Students cheered, while others protested angrily.",
    "The chancellor promised peace and stability.",
    "There is no hope left in this city.",
    "No, I am not angry.",
    "It was the shit, absolutely amazing.",
    "That performance was the bomb.",
    "He is a bad ass negotiator.",
    "She kind of liked the idea.",
    "The least happy person in the room spoke first.",
    "Vienna in June 1936 was tense but beautiful.",
    "You arrive at a telephone booth outside the University of Vienna.",
    "The atmosphere is hostile and dangerous.",
    "A friendly porter greets you warmly.",
    "The newspapers report riots, arrests and violence.",
    "I love this city, but I hate the politics.",
    "Extremely disappointing result.",
    "Hardly a success.",
    "The lecture was incredibly boring and far too long.",
    "What a wonderful surprise!",
    "This is not the worst outcome.",
    "Nobody was happy with the decision.",
    "It's not that I dislike him, I just don't trust him.",
    "The game was AWESOME!!!!",
    "Sadly, the trial ended in an acquittal.",
    "Fear spread through the coffee houses.",
    "The police ignored the warnings.",
    "Options: 1. Enter the building 2. Read the newspaper 3. Talk to the porter 4. Leave",
    "The the the.",
    "GREAT.",
    "Yeah, right, that went really well...",
    "I can't believe how good this is!",
    "Isn't it lovely?",
    "The movie was sort of okay, I guess.",
    "Not the best, not the worst.",
    "He was a decent man, but his killer was a deeply troubled person.",
]


# Rule triggers mixed into the random sentences.
TRIGGERS = ["but", "not", "never", "no", "kind", "of", "very", "extremely", "least", "at", "without", "doubt",
            "so", "this", "BUT", "isn't", "don't", "the", "a", "city", "VERY", "GOOD", "bad", "sort", "kinda",
            "the shit", "the bomb", "bad ass", "yeah right", "cut the mustard", "hand to mouth"]


def random_sentences(analyzer, count, seed=7):
    rng = random.Random(seed)
    words = sorted(analyzer.lexicon)
    out = []
    for _ in range(count):
        toks = []
        for _ in range(rng.randint(1, 14)):
            w = rng.choice(TRIGGERS) if rng.random() < 0.45 else rng.choice(words)
            if rng.random() < 0.15:
                w = w.upper()
            if rng.random() < 0.1:
                w += rng.choice([",", ".", "!", "?"])
            toks.append(w)
        out.append(" ".join(toks) + rng.choice(["", "!", "!!", "?", "??", "???", "!?", "....", "!!!!!"]))
    return out


def main():
    vs.round = lambda x, *args: x
    analyzer = vs.SentimentIntensityAnalyzer()
    sentences = SENTENCES
    if len(sys.argv) == 3 and sys.argv[1] == "--stress":
        sentences = random_sentences(analyzer, int(sys.argv[2]))
    out = []
    for s in sentences:
        scores = analyzer.polarity_scores(s)
        out.append({"text": s, **{k: scores[k] for k in ("neg", "neu", "pos", "compound")}})
    json.dump({"generator": "vaderSentiment 3.3.2, unrounded", "cases": out}, sys.stdout, indent=1, ensure_ascii=False)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
