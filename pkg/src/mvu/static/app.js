// Entry point: subscribe to the revision stream, render every pushed
// snapshot, and post user events back. Posts are fire-and-forget; the
// stream drives all re-renders.
import { initialState, render } from "./client.js";
function post(record) {
    void fetch("/event", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(record),
    }).catch(() => {
        const banner = document.getElementById("mvu-banner");
        if (banner) {
            banner.textContent = "event post failed";
            banner.style.display = "block";
        }
    });
}
function main() {
    const root = document.getElementById("mvu-root");
    if (!root)
        throw new Error("missing #mvu-root");
    const state = initialState();
    fetch("/snapshot")
        .then((r) => r.json())
        .then((snap) => render(snap, root, state, post))
        .catch(() => undefined);
    const source = new EventSource("/events");
    source.onmessage = (ev) => {
        let snap;
        try {
            snap = JSON.parse(ev.data);
        }
        catch {
            snap = null;
        }
        render(snap, root, state, post);
    };
    source.onerror = () => {
        state.status = "connecting";
    };
}
main();
