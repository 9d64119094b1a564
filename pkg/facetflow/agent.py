from .tools import facet_tools

try:
    from google.adk.agents import Agent
    ADK_AVAILABLE = facet_tools.ADK_AVAILABLE
except ImportError:
    ADK_AVAILABLE = False

root_agent = None

if ADK_AVAILABLE:
    # this is the main agent that ADK will discover
    root_agent = Agent(
        name="facetflow_agent",
        model="gemini-2.0-flash",
        description="An assistant for total variation flow with a dynamic boundary condition: it classifies facets, predicts boundary-layer detachment and runs flow scenarios.",
        instruction="""You help users study facets of the total variation flow on an interval, a disc or an annulus whose boundary value evolves by its own equation with weight tau.

## Tools
- **Classify Facet**: velocity lambda, boundary flux mu and whether a radial facet is coherent (the boundary value moves with it) or detached
- **Boundary Onset**: whether a facet forms, nothing happens or the boundary layer detaches at the inner circle of an annulus without a facet
- **Detachment Sweep**: phase diagram over (r0, rho); the layer detaches exactly when rho + r0 < 2 tau
- **Run Scenario**: executes a JSON scenario file from the project and writes CSV and JSON artifacts

## How to answer
1. Ask for the geometry (kind, radii, tau) when it is missing.
2. Report lambda and mu with their signs and say which case tag was returned.
3. For time evolution, point the user to a scenario file and run it.
4. Tool results starting with "Error:" mean the inputs were rejected; explain why.""",
        tools=[
            facet_tools.classify_facet_adk_tool,
            facet_tools.boundary_onset_adk_tool,
            facet_tools.detachment_sweep_adk_tool,
            facet_tools.run_scenario_adk_tool,
        ]
    )
