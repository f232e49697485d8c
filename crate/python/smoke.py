"""Smoke test for the pydxq extension.

Build it first:
    cargo build -p dxq-python
    cp target/debug/libpydxq.so python/pydxq.so
"""

import pydxq


def check_messages():
    m = pydxq.Message("XML-QUERY", "", "dxqp://xqd.example:8750/")
    m.set_header("Transaction-ID", "7")
    m.set_header("Merge-Algorithm", "concatenate")
    m.set_body(b"./a")
    wire = m.to_bytes()
    again = pydxq.Message.parse(wire)
    assert again == m
    assert again.header("Content-Length") == "3"
    assert again.body == b"./a"

    try:
        pydxq.Message.parse(b"DXQP-1.0 NONSENSE\r\n\r\n")
    except pydxq.ProtocolError as e:
        assert e.args[0] == 100
    else:
        raise AssertionError("malformed frame was accepted")

    names = ["PhysNet", "PhysNet (Mirror)"]
    assert pydxq.parse_result_sources(pydxq.format_result_sources(names)) == names


def check_merges():
    assert pydxq.canonical_xml("<a>  <b x='1'/>\n</a>") == '<a><b x="1"/></a>'
    assert pydxq.run_query("sum(./a)", "<d><a>2</a><a>3.5</a></d>") == "5.5"
    results = [("A", b"<r><x>1</x></r>"), ("B", b"<r><x>1</x><x>2</x></r>")]
    assert pydxq.merge_results("remove-duplicates", results, depth=1) == "<r><x>1</x><x>2</x></r>"
    assert "user-defined" in pydxq.merge_algorithms()


def check_network():
    net = pydxq.ExampleNetwork(sign_off=True)
    net.join_all()
    body, sources = net.query(
        "let $a := ./a return $a",
        algorithm="user-defined",
        merge_query="let $r := <a>{sum(./result/xqres/a)}</a> return $r",
    )
    assert body == "<a>10</a>", body
    assert sorted(sources) == ["PhysNet", "PhysNet (Mirror)"]

    physnet, mirror = pydxq.ExampleNetwork.XDPS
    net.silence(mirror)
    removed, unregistered = net.sweep()
    assert removed == [mirror] and unregistered == []
    assert net.distribution_list() == [physnet]
    net.clear_faults(mirror)
    net.leave_all()
    assert len(net.transcript()) > 0


if __name__ == "__main__":
    check_messages()
    check_merges()
    check_network()
    print("pydxq smoke test passed")
