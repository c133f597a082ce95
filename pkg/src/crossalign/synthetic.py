"""The bundled desk-scale benchmark: six assistant intents, five entity types."""

from __future__ import annotations

import numpy as np

from .data import CipherSpec

# entity types recur across intents, so which types are present says little about the intent
TEMPLATES = {
    "set_alarm": [
        "set an alarm for {time} {date}",
        "wake me up at {time} in {location}",
        "alarm for {person} at {time}",
        "i need an alarm {date} at {time}",
    ],
    "set_reminder": [
        "remind me to call {person} {date}",
        "set a reminder for {date} at {time}",
        "remind me about the meeting in {location} at {time}",
        "please remind me {date} to play {song}",
    ],
    "get_weather": [
        "what is the weather in {location} {date}",
        "will it rain at {time} {date}",
        "weather forecast for {location} {date}",
        "how cold is it where {person} lives at {time}",
    ],
    "book_flight": [
        "book a flight to {location} {date}",
        "i need a flight from {location} at {time}",
        "find flights to {location} on {date}",
        "book me a flight ticket for {person} {date}",
    ],
    "send_message": [
        "send a message to {person} {date}",
        "text {person} that i am in {location}",
        "message {person} i will be late at {time}",
        "send a message to {person} about {song}",
    ],
    "play_music": [
        "play {song}",
        "play some {song} {date}",
        "play {song} by {person}",
        "play music in {location} at {time}",
    ],
}

SLOT_FILLERS = {
    "date": ["today", "tomorrow", "next monday", "this friday", "on the weekend",
             "next week", "june first"],
    "time": ["seven am", "noon", "half past six", "nine pm", "ten thirty", "midnight"],
    "location": ["paris", "new york", "london", "the office", "san francisco", "berlin",
                 "tokyo"],
    "person": ["mom", "john", "alice smith", "my boss", "david", "sarah"],
    "song": ["hey jude", "yellow submarine", "bohemian rhapsody", "jazz", "rock music",
             "thriller"],
}

NOISE_WORDS = ["ka", "ne", "to"]

_ONSETS = list("bdfgklmnprstvz")
_VOWELS = list("aeiou")


def _pseudo_words(n: int, rng: np.random.Generator, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        syllables = rng.integers(2, 4)
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


# proper nouns usually survive translation untouched
SHARED_TYPES = ("person", "location", "song")
# loanwords shared by both languages
SHARED_WORDS = ("alarm", "reminder", "remind", "weather", "rain", "flight", "flights", "message",
                "text", "play", "music")


def default_cipher_spec(seed: int = 0, noise: float = 0.1, shared_types=SHARED_TYPES,
                        shared_words=SHARED_WORDS) -> CipherSpec:
    """Template words and non-shared filler words map to fresh pseudo-words.

    Words that only occur in fillers of ``shared_types`` keep their surface form,
    as do the ``shared_words``.
    """
    template_words = {w for temps in TEMPLATES.values() for t in temps for w in t.split()
                      if not w.startswith("{")}
    filler_words = {t: {w for f in fills for w in f.split()} for t, fills in SLOT_FILLERS.items()}
    shared = set().union(*(filler_words[t] for t in shared_types)) if shared_types else set()
    shared -= template_words
    shared -= set().union(*(ws for t, ws in filler_words.items() if t not in shared_types))
    shared |= set(shared_words)
    words = sorted((template_words | set().union(*filler_words.values())) - shared)
    rng = np.random.default_rng(seed)
    taken = template_words | set().union(*filler_words.values()) | set(NOISE_WORDS)
    cipher = dict(zip(words, _pseudo_words(len(words), rng, taken)))
    cipher.update({w: w for w in sorted(shared)})
    return CipherSpec(templates={k: list(v) for k, v in TEMPLATES.items()},
                      slot_fillers={k: list(v) for k, v in SLOT_FILLERS.items()},
                      cipher=cipher, noise=noise, noise_words=list(NOISE_WORDS))
