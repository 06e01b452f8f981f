import { mountCompareView } from "./compareView";
import { mountReviewView } from "./reviewView";

type ViewName = "review" | "compare";

interface ViewHandle {
  refresh(): Promise<void>;
  destroy(): void;
}

export function bootstrap(root: HTMLElement): { show(view: ViewName): void } {
  root.innerHTML = "";
  const nav = document.createElement("nav");
  const viewRoot = document.createElement("div");
  viewRoot.id = "view-root";
  root.append(nav, viewRoot);

  let active: ViewHandle | null = null;

  const buttons = new Map<ViewName, HTMLButtonElement>();
  function show(view: ViewName): void {
    active?.destroy();
    active = view === "review" ? mountReviewView(viewRoot) : mountCompareView(viewRoot);
    void active.refresh();
    for (const [name, button] of buttons) {
      button.classList.toggle("active", name === view);
    }
  }

  for (const view of ["review", "compare"] as const) {
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
  bootstrap(document.getElementById("app") as HTMLElement);
}
