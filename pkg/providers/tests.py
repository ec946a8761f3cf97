import hashlib
import json
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import requests
from django.test import SimpleTestCase
from rest_framework import serializers

from laip.distributions import ProbabilityDistribution

from .backends import CachedBackend, HttpChatBackend, ReplayBackend, ScriptedBackend
from .cache import ResponseCache
from .client import build_chat_backend, complete_with_retries
from .embeddings import HttpEmbeddingBackend, MockEmbeddingBackend
from .exceptions import BackendRefusal, CacheMiss, ParseFailure, TransportError
from .parsers import parse_actions, parse_distribution, parse_hypotheses
from .records import ChatMessage, CompletionRequest, request_digest


def make_request(user='Which action?', **kwargs):
    return CompletionRequest.from_prompts('test-model', 'You are observing an agent.', user, **kwargs)


def cosine(u, v):
    a, b = u.as_array(), v.as_array()
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class RequestDigestTestCase(SimpleTestCase):
    """Test cases for request digests."""

    def test_digest_is_sha256_of_canonical_json(self):
        """Test the digest against an independently built canonical payload."""
        request = make_request(temperature=0.7, seed=3)
        payload = {
            'model_id': 'test-model',
            'messages': [
                {'role': 'system', 'content': 'You are observing an agent.'},
                {'role': 'user', 'content': 'Which action?'},
            ],
            'temperature': 0.7,
            'seed': 3,
        }
        canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), ensure_ascii=False)
        self.assertEqual(request_digest(request), hashlib.sha256(canonical.encode('utf-8')).hexdigest())

    def test_digest_ignores_max_tokens_and_metadata(self):
        """Test that only model, messages, temperature and seed matter."""
        base = make_request()
        self.assertEqual(base.digest, make_request(max_tokens=12, metadata={'kind': 'likelihood'}).digest)
        self.assertNotEqual(base.digest, make_request(temperature=0.5).digest)
        self.assertNotEqual(base.digest, make_request(seed=1).digest)

    def test_request_validation(self):
        """Test that empty requests and late system messages are rejected."""
        with self.assertRaises(serializers.ValidationError):
            CompletionRequest('m', ())
        with self.assertRaises(serializers.ValidationError):
            CompletionRequest('m', (ChatMessage('user', 'a'), ChatMessage('system', 'b')))


class BackendTestCase(SimpleTestCase):
    """Test cases for scripted, cached and replay backends."""

    def setUp(self):
        """Set up a temporary cache file."""
        self.tmp = tempfile.TemporaryDirectory()
        self.cache_path = Path(self.tmp.name) / 'cache.jsonl'

    def tearDown(self):
        """Remove the temporary directory."""
        self.tmp.cleanup()

    def test_scripted_lookup_by_digest(self):
        """Test canned answers keyed on the request digest."""
        request = make_request()
        backend = ScriptedBackend(responses={request.digest: 'A1: 1.0'})
        result = backend.complete(request)
        self.assertEqual(result.text, 'A1: 1.0')
        self.assertEqual(result.backend, 'scripted')
        self.assertFalse(result.cache_hit)

    def test_scripted_without_answer(self):
        """Test that an unscripted request is refused."""
        with self.assertRaises(BackendRefusal):
            ScriptedBackend().complete(make_request())

    def test_scripted_responder_sees_metadata(self):
        """Test that responders receive the in-process metadata."""
        backend = ScriptedBackend(responder=lambda request: f"kind={request.metadata['kind']}")
        self.assertEqual(backend.complete(make_request(metadata={'kind': 'posterior'})).text, 'kind=posterior')

    def test_second_call_is_cache_hit(self):
        """Test that the same request twice hits the cache with identical text."""
        responder = MagicMock(return_value='A1: 0.25\nA2: 0.75')
        backend = CachedBackend(ScriptedBackend(responder=responder), ResponseCache(self.cache_path))
        first = backend.complete(make_request())
        second = backend.complete(make_request())
        self.assertFalse(first.cache_hit)
        self.assertTrue(second.cache_hit)
        self.assertEqual(first.text, second.text)
        self.assertEqual(responder.call_count, 1)

    def test_record_then_replay(self):
        """Test that a recorded session replays byte for byte from a fresh cache."""
        backend = CachedBackend(ScriptedBackend(responder=lambda r: f"echo {r.messages[-1].content}"), ResponseCache(self.cache_path))
        requests_ = [make_request(f"question {i}") for i in range(20)]
        recorded = [backend.complete(r).text for r in requests_]
        replay = ReplayBackend(ResponseCache(self.cache_path))
        self.assertEqual([replay.complete(r).text for r in requests_], recorded)

    def test_replay_miss(self):
        """Test that replaying an unseen request raises CacheMiss."""
        with self.assertRaises(CacheMiss):
            ReplayBackend(ResponseCache(self.cache_path)).complete(make_request())
        backend = CachedBackend(ScriptedBackend(responder=lambda r: 'x'), ResponseCache(self.cache_path), mode='replay')
        with self.assertRaises(CacheMiss):
            backend.complete(make_request())

    def test_cache_records(self):
        """Test the JSONL record layout."""
        backend = CachedBackend(ScriptedBackend(responder=lambda r: 'A1: 1'), ResponseCache(self.cache_path))
        backend.complete(make_request())
        record = json.loads(self.cache_path.read_text(encoding='utf-8').splitlines()[0])
        self.assertEqual(set(record), {'digest', 'request', 'response_text', 'timestamp', 'usage'})
        self.assertEqual(record['response_text'], 'A1: 1')

    def test_concurrent_appends(self):
        """Test that parallel misses write one line per distinct request."""
        backend = CachedBackend(ScriptedBackend(responder=lambda r: r.messages[-1].content), ResponseCache(self.cache_path))
        with ThreadPoolExecutor(max_workers=8) as pool:
            list(pool.map(lambda i: backend.complete(make_request(f"q{i % 50}")), range(200)))
        lines = self.cache_path.read_text(encoding='utf-8').splitlines()
        self.assertEqual(len(lines), 50)
        self.assertEqual(len(ResponseCache(self.cache_path)), 50)

    def test_build_chat_backend(self):
        """Test backend construction from a run configuration."""
        backend = build_chat_backend('scripted', cache_path=str(self.cache_path), responder=lambda r: 'ok')
        self.assertIsInstance(backend, CachedBackend)
        self.assertIsInstance(build_chat_backend('replay', cache_path=str(self.cache_path)), ReplayBackend)
        with self.assertRaises(ValueError):
            build_chat_backend('carrier-pigeon')


class HttpChatBackendTestCase(SimpleTestCase):
    """Test cases for the HTTP backend with a mocked session."""

    def make_backend(self, response=None, error=None):
        session = MagicMock()
        if error is not None:
            session.post.side_effect = error
        else:
            session.post.return_value = response
        return HttpChatBackend(base_url='https://llm.example/v1/', api_key='secret', timeout=5, session=session), session

    def make_response(self, status=200, body=None):
        response = MagicMock()
        response.status_code = status
        response.json.return_value = body if body is not None else {}
        response.text = json.dumps(body or {})
        return response

    def test_successful_completion(self):
        """Test the wire payload and the parsed result."""
        body = {'choices': [{'message': {'content': 'A1: 1.0'}}], 'usage': {'prompt_tokens': 12, 'completion_tokens': 3}}
        backend, session = self.make_backend(self.make_response(body=body))
        result = backend.complete(make_request(seed=7))
        self.assertEqual(result.text, 'A1: 1.0')
        self.assertEqual(dict(result.usage), {'prompt_tokens': 12, 'completion_tokens': 3})
        args, kwargs = session.post.call_args
        self.assertEqual(args[0], 'https://llm.example/v1/chat/completions')
        self.assertEqual(kwargs['json']['seed'], 7)
        self.assertEqual(kwargs['headers']['Authorization'], 'Bearer secret')
        self.assertNotIn('metadata', kwargs['json'])

    def test_network_error(self):
        """Test that request exceptions become TransportError."""
        backend, _ = self.make_backend(error=requests.exceptions.ConnectionError('down'))
        with self.assertRaises(TransportError):
            backend.complete(make_request())

    def test_server_error(self):
        """Test that 5xx responses become TransportError."""
        backend, _ = self.make_backend(self.make_response(status=503))
        with self.assertRaises(TransportError):
            backend.complete(make_request())

    def test_refusal(self):
        """Test that 4xx responses and malformed bodies become BackendRefusal."""
        backend, _ = self.make_backend(self.make_response(status=400, body={'error': 'bad'}))
        with self.assertRaises(BackendRefusal):
            backend.complete(make_request())
        backend, _ = self.make_backend(self.make_response(body={'choices': []}))
        with self.assertRaises(BackendRefusal):
            backend.complete(make_request())


class HttpEmbeddingBackendTestCase(SimpleTestCase):
    """Test cases for the HTTP embedding backend with a mocked session."""

    def make_backend(self, status=200, body=None, error=None):
        session = MagicMock()
        if error is not None:
            session.post.side_effect = error
        else:
            response = MagicMock()
            response.status_code = status
            response.json.return_value = body if body is not None else {}
            response.text = json.dumps(body or {})
            session.post.return_value = response
        backend = HttpEmbeddingBackend(model='embed-model', base_url='https://llm.example/v1', api_key='secret', session=session)
        return backend, session

    def test_successful_embedding(self):
        """Test the wire payload and the returned vector."""
        backend, session = self.make_backend(body={'data': [{'embedding': [0.6, 0.8]}]})
        vector = backend.embed('pad thai')
        self.assertEqual(vector.values, (0.6, 0.8))
        args, kwargs = session.post.call_args
        self.assertEqual(args[0], 'https://llm.example/v1/embeddings')
        self.assertEqual(kwargs['json'], {'model': 'embed-model', 'input': 'pad thai'})

    def test_client_error_is_refusal(self):
        """Test that 4xx responses become BackendRefusal, not TransportError."""
        for status in (400, 401, 404, 422):
            backend, _ = self.make_backend(status=status, body={'error': 'bad'})
            with self.assertRaises(BackendRefusal) as ctx:
                backend.embed('pad thai')
            self.assertNotIsInstance(ctx.exception, TransportError)

    def test_server_and_network_errors(self):
        """Test that 5xx responses and request exceptions become TransportError."""
        backend, _ = self.make_backend(status=502)
        with self.assertRaises(TransportError):
            backend.embed('pad thai')
        backend, _ = self.make_backend(error=requests.exceptions.Timeout('slow'))
        with self.assertRaises(TransportError):
            backend.embed('pad thai')

    def test_malformed_payload(self):
        backend, _ = self.make_backend(body={'data': []})
        with self.assertRaises(BackendRefusal):
            backend.embed('pad thai')


class ParseDistributionTestCase(SimpleTestCase):
    """Test cases for probability extraction."""

    def test_labelled_values(self):
        """Test 'A1: 0.7, A2: 0.3'."""
        dist = parse_distribution('A1: 0.7, A2: 0.3', 2)
        self.assertAlmostEqual(dist['A1'], 0.7, places=5)
        self.assertAlmostEqual(dist['A2'], 0.3, places=5)

    def test_percentages_are_normalized(self):
        """Test 'A1: 70%, A2: 20%' normalizing to (0.778, 0.222)."""
        dist = parse_distribution('A1: 70%, A2: 20%', 2)
        self.assertAlmostEqual(dist['A1'], 0.7 / 0.9, places=5)
        self.assertAlmostEqual(dist['A2'], 0.2 / 0.9, places=5)

    def test_count_mismatch(self):
        """Test that three values for k=2 fail."""
        with self.assertRaises(ParseFailure):
            parse_distribution('A1: 0.2, A2: 0.3, A3: 0.5', 2)
        with self.assertRaises(ParseFailure):
            parse_distribution('0.2, 0.3, 0.5', 2)

    def test_json_block_preferred(self):
        """Test that the JSON answer wins over numbers in the reasoning."""
        text = 'Room 2 is close, so 3 steps remain.\nAnswer: {"H2": 0.25, "H1": 0.75}'
        dist = parse_distribution(text, 2, prefix='H', floor=0.0)
        self.assertEqual(dist.labels, ('H1', 'H2'))
        self.assertEqual(dist.probs, (0.75, 0.25))

    def test_last_number_per_line(self):
        """Test the line-oriented fallback."""
        dist = parse_distribution('1. Move to Room 2 - 0.6\n2. Move to Room 4 - 0.4', 2, floor=0.0)
        self.assertAlmostEqual(dist.probs[0], 0.6, places=12)

    def test_floor_removes_exact_zeros(self):
        """Test that the default floor keeps every entry positive."""
        dist = parse_distribution('A1: 1.0\nA2: 0.0', 2)
        self.assertGreater(dist['A2'], 0.0)
        self.assertAlmostEqual(sum(dist.probs), 1.0, delta=1e-9)

    def test_all_zero(self):
        """Test that an all-zero answer is unusable without a floor."""
        with self.assertRaises(ParseFailure):
            parse_distribution('A1: 0\nA2: 0', 2, floor=0.0)

    def test_oracle_precision_survives(self):
        """Test that repr-formatted floats pass through unchanged with floor 0."""
        values = [0.0033333333333333335, 0.9933333333333333, 0.0033333333333333335]
        text = '\n'.join(f"A{i}: {v!r}" for i, v in enumerate(values, start=1))
        dist = parse_distribution(text, 3, floor=0.0)
        for got, want in zip(dist.probs, values):
            self.assertAlmostEqual(got, want, delta=1e-15)

    def test_input_not_mutated(self):
        """Test that parsing leaves the text untouched."""
        text = 'A1: 0.5\nA2: 0.5'
        copy = str(text)
        parse_distribution(text, 2)
        self.assertEqual(text, copy)

    def test_oversized_label_index(self):
        """Test that a key with thousands of digits is treated as an unlabelled value."""
        text = '{"A' + '1' * 5000 + '": 0.25, "A2": 0.75}'
        dist = parse_distribution(text, 2, floor=0.0)
        self.assertEqual(dist.probs, (0.25, 0.75))
        with self.assertRaises(ParseFailure):
            parse_distribution('{"A' + '9' * 5000 + '": 0.25}', 2)


class ParseHypothesesTestCase(SimpleTestCase):
    """Test cases for hypothesis list extraction."""

    def test_twenty_hypotheses(self):
        """Test a well-formed twenty-item list with percentages."""
        text = '\n'.join(f"{i}. Hypothesis number {i} about the agent (probability: 5%)" for i in range(1, 21))
        statements, prior = parse_hypotheses(text, 20)
        self.assertEqual(len(statements), 20)
        self.assertEqual(statements[0], 'Hypothesis number 1 about the agent')
        self.assertAlmostEqual(sum(prior.probs), 1.0, delta=1e-9)
        self.assertEqual(prior.labels[0], 'H1')

    def test_renormalizes(self):
        """Test that probabilities summing to 1.07 are renormalized."""
        text = (
            "1. The agent prefers Japanese food the most (probability: 40%)\n"
            "2. The agent prefers Chinese food the most (probability: 35%)\n"
            "3. The agent prefers Mexican food the most (probability: 32%)\n"
        )
        statements, prior = parse_hypotheses(text, 3, floor=0.0)
        self.assertEqual(statements[2], 'The agent prefers Mexican food the most')
        self.assertAlmostEqual(prior['H1'], 0.40 / 1.07, places=12)

    def test_json_list(self):
        """Test the structured form."""
        text = json.dumps([{'hypothesis': 'Likes tea', 'probability': 0.2}, {'hypothesis': 'Likes coffee', 'probability': 0.8}])
        statements, prior = parse_hypotheses(text, 2, floor=0.0)
        self.assertEqual(statements, ['Likes tea', 'Likes coffee'])
        self.assertEqual(prior.probs, (0.2, 0.8))

    def test_prose(self):
        """Test that prose without a list fails."""
        with self.assertRaises(ParseFailure):
            parse_hypotheses('The agent is probably hungry and likes noodles.', 3)

    def test_count_mismatch(self):
        """Test that too few hypotheses fail."""
        with self.assertRaises(ParseFailure):
            parse_hypotheses('1. Likes tea (20%)\n2. Likes coffee (80%)', 3)


class ParseActionsTestCase(SimpleTestCase):
    """Test cases for free-text action lists."""

    def test_numbered_list(self):
        """Test a numbered list of actions."""
        text = '1. Order coffee\n2. Buy a sandwich\n3. Get sushi'
        self.assertEqual(parse_actions(text, 3), ['Order coffee', 'Buy a sandwich', 'Get sushi'])

    def test_single_action(self):
        """Test k=1."""
        self.assertEqual(parse_actions('["Eat pad thai"]', 1), ['Eat pad thai'])

    def test_duplicates_fail(self):
        """Test that duplicates do not count as distinct actions."""
        with self.assertRaises(ParseFailure):
            parse_actions('- Order coffee\n- order coffee', 2)


class ParserFuzzTestCase(SimpleTestCase):
    """Fuzz the parsers with random mixtures of numbers, labels and noise."""

    FRAGMENTS = [
        'A1:', 'A2:', 'H3 =', '0.5', '70%', '1e-3', '-2', '{', '}', '[', ']', '"A1": ', ',', '\n', '1.',
        'probability:', '(', ')', 'nan', 'NaN', 'Infinity', '1e999', '**', 'The agent', ' ', '\x00', 'é', '100',
        '{"H1": 0.2, "H2": 0.8}', '[0.1, 0.9]', '[[[[[[', ':', '.', '%', '2.', '- ', 'null', 'true',
        '{"A' + '7' * 5000 + '": 0.5, ', '"H' + '3' * 4400 + '" = ', '1' * 4500,
    ]

    def test_ten_thousand_cases(self):
        """Test that parsers return a simplex or raise ParseFailure."""
        rng = np.random.default_rng(20240611)
        for _ in range(10000):
            pieces = rng.integers(0, len(self.FRAGMENTS), size=rng.integers(0, 25))
            text = ''.join(self.FRAGMENTS[i] for i in pieces)
            if rng.random() < 0.2:
                text += ''.join(chr(c) for c in rng.integers(1, 0x2FF, size=10))
            k = int(rng.integers(1, 5))
            try:
                dist = parse_distribution(text, k)
            except ParseFailure:
                pass
            else:
                self.assertIsInstance(dist, ProbabilityDistribution)
                self.assertEqual(len(dist), k)
                self.assertAlmostEqual(sum(dist.probs), 1.0, delta=1e-9)
                self.assertTrue(all(0.0 < p <= 1.0 for p in dist.probs))
            try:
                statements, prior = parse_hypotheses(text, k)
            except ParseFailure:
                pass
            else:
                self.assertEqual(len(statements), k)
                self.assertAlmostEqual(sum(prior.probs), 1.0, delta=1e-9)


class RetryTestCase(SimpleTestCase):
    """Test cases for the retry loop."""

    def test_retry_then_success(self):
        """Test that a reminder is appended after an unreadable answer."""
        answers = iter(['I am not sure.', 'A1: 0.4\nA2: 0.6'])
        backend = ScriptedBackend(responder=lambda r: next(answers))
        value, transcripts = complete_with_retries(backend, make_request(), lambda t: parse_distribution(t, 2))
        self.assertAlmostEqual(value['A2'], 0.6, places=5)
        self.assertEqual(len(transcripts), 2)
        self.assertTrue(transcripts[0].error)
        second = backend.requests[1]
        self.assertEqual(second.messages[-2], ChatMessage('assistant', 'I am not sure.'))
        self.assertIn('requested format', second.messages[-1].content)

    def test_gives_up(self):
        """Test that exhausting retries raises ParseFailure with every transcript."""
        backend = ScriptedBackend(responder=lambda r: 'no numbers here')
        with self.assertRaises(ParseFailure) as ctx:
            complete_with_retries(backend, make_request(), lambda t: parse_distribution(t, 2), retries=3)
        self.assertEqual(len(ctx.exception.transcripts), 4)


class MockEmbeddingTestCase(SimpleTestCase):
    """Test cases for the mock embedding backend."""

    def test_identical_strings(self):
        """Test that identical strings give identical unit vectors."""
        backend = MockEmbeddingBackend()
        a, b = backend.embed('pad thai'), backend.embed('pad thai')
        self.assertEqual(a, b)
        self.assertEqual(a.dim, 64)
        self.assertAlmostEqual(cosine(a, b), 1.0, delta=1e-9)

    def test_basis_strings_are_orthogonal(self):
        """Test that designated strings embed to orthogonal vectors."""
        backend = MockEmbeddingBackend(basis=['coffee', 'sushi', 'burger'])
        self.assertEqual(cosine(backend.embed('coffee'), backend.embed('sushi')), 0.0)
        self.assertAlmostEqual(cosine(backend.embed('burger'), backend.embed('burger')), 1.0, delta=1e-9)
