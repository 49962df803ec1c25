from hypothesis import given
from hypothesis import strategies as st

from wormnet.events import EventKind, EventLog, kind_name

records = st.lists(
    st.tuples(st.floats(0, 1e6, allow_nan=False), st.sampled_from(list(EventKind)),
              st.integers(0, 1000), st.integers(-1, 1000)),
    max_size=30,
).map(lambda r: sorted(r, key=lambda x: x[0]))


@given(records)
def test_csv_round_trip(recs):
    log = EventLog.from_records(recs)
    back = EventLog.from_csv(log.to_csv())
    assert list(back) == list(log)


def test_header_and_names():
    log = EventLog.from_records([(0.0, EventKind.PREY_INFECT, 1, -1), (2.5, EventKind.TERMINATE, 1, 2)])
    lines = log.to_csv().splitlines()
    assert lines[0] == "t,event,node_a,node_b"
    assert lines[1] == "0.0,PreyInfect,1,-1"
    assert lines[2] == "2.5,Terminate,1,2"


def test_without_and_empty():
    log = EventLog.from_records([(0.0, EventKind.ON_OFF_TOGGLE, 1, 0), (1.0, EventKind.INJECT, 2, -1)])
    assert len(log.without(EventKind.ON_OFF_TOGGLE)) == 1
    assert len(EventLog.empty()) == 0
    assert kind_name(5) == "Inject"
