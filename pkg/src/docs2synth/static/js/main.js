import { mountCompareView } from "./compareView.js";
import { mountReviewView } from "./reviewView.js";
export function bootstrap(root) {
    root.innerHTML = "";
    const nav = document.createElement("nav");
    const viewRoot = document.createElement("div");
    viewRoot.id = "view-root";
    root.append(nav, viewRoot);
    let active = null;
    const buttons = new Map();
    function show(view) {
        active?.destroy();
        active = view === "review" ? mountReviewView(viewRoot) : mountCompareView(viewRoot);
        void active.refresh();
        for (const [name, button] of buttons) {
            button.classList.toggle("active", name === view);
        }
    }
    for (const view of ["review", "compare"]) {
        const button = document.createElement("button");
        button.textContent = view;
        button.dataset.testid = `nav-${view}`;
        button.addEventListener("click", () => show(view));
        buttons.set(view, button);
        nav.appendChild(button);
    }
    show("review");
    return { show };
}
// browser entry point; tests import bootstrap directly
if (typeof document !== "undefined" && document.getElementById("app")) {
    bootstrap(document.getElementById("app"));
}
