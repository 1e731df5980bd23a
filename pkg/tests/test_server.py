import threading
import time
from datetime import datetime, timezone

import pytest

from ldsim.building import GeneratorParams, build_dataset
from ldsim.engine import RunParams, SimEnvironment, SimulationRuntime
from ldsim.httpclient import LdClient
from ldsim.metrics import audit_write_deltas
from ldsim.ns import RDF_VALUE
from ldsim.rdf import IRI, Literal, rebase_dataset
from ldsim.server import LinkedDataServer, ResourcePolicy, default_policy


def small_params():
    return GeneratorParams(
        rooms=4, floors=1, wings=1, lighting_systems=3,
        systems_with_occupancy=2, systems_with_command=2,
        systems_with_luminance=1, rooms_with_occupancy=2,
        rooms_with_command=2, rooms_with_luminance=1,
        command_points=2, luminance_points=1, hygiene_lights=0, seed=3)


def start_server(policy=None, params=None, seed=7):
    pd = build_dataset(params=params or small_params())
    server = LinkedDataServer()
    dataset = rebase_dataset(pd.dataset, pd.base, server.base)
    dynamic = {}
    for res in pd.dynamic.values():
        moved = res.__class__(**{**res.__dict__})
        moved.graph = res.graph.replace(pd.base, server.base)
        moved.node = res.node.replace(pd.base, server.base)
        moved.point = res.point.replace(pd.base, server.base)
        moved.system = res.system.replace(pd.base, server.base)
        moved.room = res.room.replace(pd.base, server.base)
        dynamic[moved.graph] = moved
    env = SimEnvironment(dataset=dataset, init_entries=[], update_entries=[],
                         seed=seed, base=server.base, dynamic=dynamic)
    runtime = SimulationRuntime(env)
    server.attach(runtime, policy or default_policy(dynamic))
    server.start()
    return server, runtime, dynamic


@pytest.fixture()
def served():
    server, runtime, dynamic = start_server()
    yield server, runtime, dynamic
    server.stop()


def command_resource(dynamic):
    return next(r for r in sorted(dynamic.values(), key=lambda r: r.graph)
                if r.category == "command")


class TestGet:
    def test_room_graph_contains_links(self, served):
        server, runtime, dynamic = served
        client = LdClient(server.base)
        res = command_resource(dynamic)
        status, triples = client.get_graph(res.room)
        assert status == 200
        preds = {p.value for _, p, _ in triples}
        assert any(p.endswith("hasPart") for p in preds)
        assert any(p.endswith("feeds") for p in preds)

    def test_unknown_resource_404(self, served):
        server, _, _ = served
        status, _ = LdClient(server.base).get_graph(server.base + "nothing-here")
        assert status == 404

    def test_default_graph_hidden(self, served):
        server, runtime, _ = served
        # Occupant facts live in the hidden default graph only.
        occupant = server.base + ".well-known/occupant-001"
        status, _ = LdClient(server.base).get_graph(occupant)
        assert status == 404

    def test_content_negotiation(self, served):
        server, _, dynamic = served
        res = command_resource(dynamic)
        client = LdClient(server.base)
        status, body = client._request("GET", client.path_of(res.graph),
                                       headers={"Accept": "application/n-triples"})
        assert status == 200
        assert b"@prefix" not in body
        status, body = client._request("GET", client.path_of(res.graph))
        assert b"@prefix" in body

    def test_sim_resource_reflects_ticks(self, served):
        server, runtime, _ = served
        runtime.initialize(RunParams(
            initial_time=datetime(2020, 5, 22, tzinfo=timezone.utc),
            timeslot_ms=10, iterations=100, step_seconds=60))
        for _ in range(4):
            runtime.tick()
        status, triples = LdClient(server.base).get_graph(server.base + "sim")
        assert status == 200
        values = {o.lexical for s, p, o in triples
                  if p.value.endswith("currentIteration")}
        assert values == {"4"}


class TestPut:
    def test_switch_on_and_read_back(self, served):
        server, runtime, dynamic = served
        res = command_resource(dynamic)
        client = LdClient(server.base, agent="tester")
        node = IRI(res.node)
        status = client.put_graph(res.graph, {(node, IRI(RDF_VALUE), Literal("on"))})
        assert status == 204
        _, triples = client.get_graph(res.graph)
        assert (node, IRI(RDF_VALUE), Literal("on")) in triples

    def test_room_not_writable(self, served):
        server, _, dynamic = served
        res = command_resource(dynamic)
        client = LdClient(server.base)
        status = client.put_graph(res.room, {(IRI(res.room), IRI(RDF_VALUE),
                                              Literal("x"))})
        assert status == 403

    def test_malformed_payload_leaves_dataset(self, served):
        server, runtime, dynamic = served
        res = command_resource(dynamic)
        before = runtime.dataset
        client = LdClient(server.base)
        status, _ = client._request("PUT", client.path_of(res.graph),
                                    body=b"this is not turtle",
                                    headers={"Content-Type": "text/turtle"})
        assert status == 400
        assert runtime.dataset is before

    def test_foreign_subject_rejected(self, served):
        server, _, dynamic = served
        res = command_resource(dynamic)
        client = LdClient(server.base)
        status = client.put_graph(res.graph, {(IRI(server.base + "other"),
                                               IRI(RDF_VALUE), Literal("on"))})
        assert status == 400

    def test_fragment_subject_allowed(self, served):
        server, _, dynamic = served
        res = command_resource(dynamic)
        client = LdClient(server.base)
        assert res.node.startswith(res.graph + "#")
        status = client.put_graph(res.graph, {(IRI(res.node), IRI(RDF_VALUE),
                                               Literal("off"))})
        assert status == 204

    def test_post_and_delete_gated_off(self, served):
        server, _, dynamic = served
        res = command_resource(dynamic)
        client = LdClient(server.base)
        assert client.post_graph(res.graph, {(IRI(res.node), IRI(RDF_VALUE),
                                              Literal("x"))}) == 405
        assert client.delete(res.graph) == 405


class TestPermissivePolicy:
    def test_create_and_delete_classified(self):
        params = small_params()
        pd = build_dataset(params=params)
        server = LinkedDataServer()
        from ldsim.rdf import rebase_dataset as rb

        dataset = rb(pd.dataset, pd.base, server.base)
        env = SimEnvironment(dataset=dataset, init_entries=[], update_entries=[],
                             seed=1, base=server.base, dynamic={})
        runtime = SimulationRuntime(env)
        fresh = server.base + "scratch"
        policy = ResourcePolicy(writable=frozenset({fresh}), allow_create=True,
                                allow_delete=True)
        server.attach(runtime, policy)
        server.start()
        try:
            client = LdClient(server.base, agent="writer")
            node = IRI(fresh)
            assert client.put_graph(fresh, {(node, IRI(RDF_VALUE), Literal("1"))}) == 201
            assert client.post_graph(fresh, {(node, IRI(RDF_VALUE), Literal("2"))}) == 204
            _, triples = client.get_graph(fresh)
            assert len(triples) == 2  # POST merges
            assert client.delete(fresh) == 204
            status, _ = client.get_graph(fresh)
            assert status == 404
            _, ops = runtime.snapshot_log()
            writes = [op for op in ops if not op.is_read and op.ok]
            assert [op.classification for op in writes] == ["create", "replace", "delete"]
            assert audit_write_deltas(ops) == []
        finally:
            server.stop()


class TestSimPut:
    PAYLOAD = """
    @prefix sim: <vocab/sim#> .
    @prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
    <sim> sim:initialTime "2020-05-22T00:00:00+00:00"^^xsd:dateTime ;
          sim:timeslotDuration 20 ;
          sim:iterations 5 ;
          sim:simulatedStep 60 .
    """

    def test_run_starts_and_finishes(self, served):
        server, runtime, _ = served
        client = LdClient(server.base)
        status, body = client.put_raw("sim", self.PAYLOAD)
        assert status == 200, body
        assert runtime.finished.wait(5)
        assert runtime.iteration == 5

    def test_second_put_conflicts(self, served):
        server, runtime, _ = served
        client = LdClient(server.base)
        assert client.put_raw("sim", self.PAYLOAD)[0] == 200
        assert client.put_raw("sim", self.PAYLOAD)[0] == 409
        runtime.finished.wait(5)

    def test_missing_parameter_rejected(self, served):
        server, runtime, _ = served
        payload = '@prefix sim: <vocab/sim#> . <sim> sim:iterations 5 .'
        status, body = LdClient(server.base).put_raw("sim", payload)
        assert status == 400
        assert b"initialTime" in body


class TestConcurrency:
    def test_atomic_writes_under_ticks(self, served):
        server, runtime, dynamic = served
        runtime.initialize(RunParams(
            initial_time=datetime(2020, 5, 22, tzinfo=timezone.utc),
            timeslot_ms=5, iterations=10 ** 6, step_seconds=60))
        stop = threading.Event()

        def ticker():
            while not stop.is_set():
                runtime.tick()

        thread = threading.Thread(target=ticker, daemon=True)
        thread.start()
        try:
            res = command_resource(dynamic)
            client = LdClient(server.base, agent="w")
            node = IRI(res.node)
            for i in range(60):
                value = Literal("on" if i % 2 else "off")
                assert client.put_graph(res.graph, {(node, IRI(RDF_VALUE), value)}) == 204
                status, triples = client.get_graph(res.graph)
                assert status == 200
                values = [o for s, p, o in triples if p.value == RDF_VALUE]
                assert values == [value]  # snapshot isolation: never half-applied
        finally:
            stop.set()
            thread.join(2)
        _, ops = runtime.snapshot_log()
        assert audit_write_deltas(ops) == []

    @pytest.mark.perf
    def test_mixed_throughput(self, served):
        server, runtime, dynamic = served
        runtime.initialize(RunParams(
            initial_time=datetime(2020, 5, 22, tzinfo=timezone.utc),
            timeslot_ms=500, iterations=10 ** 6, step_seconds=60))
        stop = threading.Event()

        def ticker():
            next_at = time.monotonic()
            while not stop.is_set():
                next_at += 0.5
                runtime.tick()
                delay = next_at - time.monotonic()
                if delay > 0:
                    stop.wait(delay)

        ticker_thread = threading.Thread(target=ticker, daemon=True)
        ticker_thread.start()
        res = command_resource(dynamic)
        node = IRI(res.node)
        done = []

        def worker(n):
            client = LdClient(server.base, agent=f"w{n}")
            count = 0
            deadline = time.monotonic() + 2.0
            while time.monotonic() < deadline:
                client.get_graph(res.graph)
                client.put_graph(res.graph, {(node, IRI(RDF_VALUE), Literal("on"))})
                count += 2
            done.append(count)

        workers = [threading.Thread(target=worker, args=(n,)) for n in range(4)]
        for w in workers:
            w.start()
        for w in workers:
            w.join()
        stop.set()
        ticker_thread.join(2)
        rate = sum(done) / 2.0
        assert rate >= 200, f"only {rate:.0f} requests/s"
